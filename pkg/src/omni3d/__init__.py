"""Double-side routed standard-cell design-technology co-optimization toolkit."""

__version__ = "0.1.0"
