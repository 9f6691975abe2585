"""Hypocoercive certification tools for kinetic diffusions on frame bundles."""
__version__ = "0.1.0"
