"""Closed-loop simulation, benchmarks, figures and the CLI."""
