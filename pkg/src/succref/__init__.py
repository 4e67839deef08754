"""Rate-distortion regions, channel capacities and coding simulations for two-stage refinement."""

__version__ = "0.1.0"
