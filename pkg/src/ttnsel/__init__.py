"""Tree tensor networks for least-squares learning with slope-heuristics model selection."""

__version__ = "0.1.0"
