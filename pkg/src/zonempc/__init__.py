"""Building-MPC testbench: RC zone plant, data-driven models, convex MPC."""

__version__ = "0.1.0"
