"""Recursive Bayes filter library, verification oracles and simulation CLI."""
