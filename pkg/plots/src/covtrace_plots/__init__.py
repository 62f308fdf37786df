"""Figure rendering for covtrace timeline and result files."""

__version__ = "0.1.0"
