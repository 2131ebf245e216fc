"""perfbaron: store benchmark results, detect change points, triage them."""

__version__ = "0.1.0"
