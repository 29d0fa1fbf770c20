"""Physics-informed neural networks for partially known DAE process models."""

__version__ = "0.1.0"
