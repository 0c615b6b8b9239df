"""RGB+thermal multi-view pose and depth estimation with low-rank adapter fine-tuning."""

__version__ = "0.1.0"
