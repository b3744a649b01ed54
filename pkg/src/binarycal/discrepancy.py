"""Single-vector discrepancy basis from persistent ensemble/observation mismatch.

Works best when the design points are a representative sample of plausible
parameter values; a biased ensemble leaks parameter signal into the basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryField, EnsembleMatrix, ValidationError

R_CLAMP = 0.999
K_MAX = float(np.log((1 + R_CLAMP) / (1 - R_CLAMP)))


@dataclass(frozen=True)
class DiscrepancyBasis:
    k_d: np.ndarray
    cutoff: float
    r: np.ndarray


def mismatch_proportions(Y: EnsembleMatrix, Z: BinaryField) -> np.ndarray:
    """Signed share of runs disagreeing with the observation at each cell.

    Positive where the model says 1 and the observation 0.
    """
    if Y.grid != Z.grid:
        raise ValidationError("ensemble and observation grids differ")
    diff = Y.values.astype(np.int64) - Z.values.astype(np.int64)[None, :]
    return np.sign(diff).sum(axis=0) / Y.p


def build_basis(r, cutoff: float = 0.5) -> DiscrepancyBasis:
    if not 0 < cutoff < 1:
        raise ValidationError("cutoff must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1):
        raise ValidationError("mismatch proportions must lie in [-1, 1]")
    rc = np.where(np.abs(r) > R_CLAMP, np.sign(r) * R_CLAMP, r)
    k = np.where(np.abs(r) > cutoff, np.log1p(rc) - np.log1p(-rc), 0.0)
    return DiscrepancyBasis(k, float(cutoff), r)


def recover_check(basis, truth) -> float:
    """Absolute Pearson correlation between ``k_d`` and a known discrepancy.

    Restricted to cells where either vector is nonzero. The sign of ``k_d``
    is not identified (its coefficient has a symmetric prior), hence the
    absolute value.
    """
    k = basis.k_d if isinstance(basis, DiscrepancyBasis) else np.asarray(basis, dtype=float)
    t = np.asarray(truth, dtype=float)
    if k.shape != t.shape:
        raise ValidationError("basis and truth lengths differ")
    keep = (k != 0) | (t != 0)
    k, t = k[keep], t[keep]
    if k.size < 2 or np.std(k) == 0 or np.std(t) == 0:
        raise ValidationError("zero-variance input to recover_check")
    return float(abs(np.corrcoef(k, t)[0, 1]))
