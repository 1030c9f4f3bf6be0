"""Critical kinetic trajectories and numerical checks for kinetic Kolmogorov equations."""

__version__ = "0.1.0"
