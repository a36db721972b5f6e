"""Observer-effect optimization with per-cluster memory control."""

__version__ = "0.1.0"
