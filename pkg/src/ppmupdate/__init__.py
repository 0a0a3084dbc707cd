"""Model-update strategies benchmark for outcome-oriented predictive process monitoring."""

__version__ = "0.1.0"
