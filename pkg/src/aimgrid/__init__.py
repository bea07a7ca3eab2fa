"""MILP-based scheduling and coordination of autonomous vehicles on intersection grids."""

__version__ = "0.1.0"
