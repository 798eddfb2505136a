"""Character-level NMT with an attended morphology table and an auxiliary label channel."""

__version__ = "0.1.0"
