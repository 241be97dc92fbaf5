"""Tools package for simulation and oracle validation."""
