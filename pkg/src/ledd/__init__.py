"""Near-lossless image coding with an l-infinity constrained refinement decoder."""

__version__ = "0.1.0"
