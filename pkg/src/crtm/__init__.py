"""Confined run-and-tumble model: kinetic solver, Monte Carlo engine, diagnostics."""

__version__ = "0.1.0"
