"""Calibration of computer models against binary spatial data.

Binary ensemble output is reduced with logistic PCA, the principal-component
scores are emulated with Gaussian processes, and the calibration posterior,
including a data-driven discrepancy term, is sampled by Metropolis-Hastings.
"""
from .core import BinaryField, DesignMatrix, EnsembleMatrix, GridSpec, ValidationError

__all__ = ["BinaryField", "DesignMatrix", "EnsembleMatrix", "GridSpec", "ValidationError"]
__version__ = "0.1.0"
