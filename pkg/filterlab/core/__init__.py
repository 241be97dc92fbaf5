"""Numerical core: Gaussian algebra, models, filters and oracles."""
