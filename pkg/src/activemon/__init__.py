"""Active stream monitoring: spec analysis, scheduling, and simulation."""

__version__ = "0.1.0"
