"""Symbolic-dynamics workbench: saturated orbit construction, recurrence
classification, densities, weak* metrics, entropy and multifractal tools."""

__version__ = "0.1.0"
