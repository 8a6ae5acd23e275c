"""Figure rendering for isacal CSV outputs."""

__version__ = "0.1.0"
