"""Counterfactual explanation benchmark for tabular classifiers."""
from ._accel import backend

__version__ = "0.1.0"
__all__ = ["backend", "__version__"]
