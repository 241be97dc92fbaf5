"""Tests package for the filter library and CLI."""
