"""Models package for scenario document schemas."""
