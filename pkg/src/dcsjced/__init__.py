"""Joint channel estimation and turbo equalization over time-varying sparse channels."""

__version__ = "0.1.0"
