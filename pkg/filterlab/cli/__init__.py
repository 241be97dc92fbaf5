"""Command-line subcommands and CSV output."""
