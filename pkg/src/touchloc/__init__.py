"""Touch-based object localization with hypothesis-pruning action selection."""

__version__ = "0.1.0"
