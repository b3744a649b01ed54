"""Indicator-of-quadratic toy simulator with a known calibration truth.

The model output at ``theta = (t1, t2)`` and location ``s = (s1, s2)`` is 1
where ``1 - s1**2 - (s2/1.5)**2 - t1 + t2*(s2 + 1.5) > 0`` and 0 elsewhere,
over a 30 x 30 lattice on ``[-1, 1] x [-1.5, 1.5]``. Observations are the
truth-run output pushed to the logit scale, perturbed by an exponential-
covariance Gaussian process and dichotomized again.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.spatial.distance import cdist

from .core import BinaryField, DesignMatrix, EnsembleMatrix, GridSpec, ValidationError


@dataclass(frozen=True)
class SyntheticConfig:
    theta1_range: tuple = (0.3, 0.65)
    theta2_range: tuple = (0.0, 0.2)
    x_range: tuple = (-1.0, 1.0)
    y_range: tuple = (-1.5, 1.5)
    grid_shape: tuple = (30, 30)
    lattice: tuple = (10, 10)
    sill: float = 1.5
    range: float = 0.03
    nugget: float = 1e-5
    # clean-field logit magnitude; chosen so the default noise flips ~10% of cells
    saturation_logit: float = 1.57
    truth: tuple = (0.494, 0.089)
    seed: int = 0

    def __post_init__(self):
        if self.sill < 0 or self.range <= 0 or self.nugget < 0:
            raise ValidationError("noise needs sill >= 0, range > 0, nugget >= 0")
        if self.lattice[0] < 2 or self.lattice[1] < 2:
            raise ValidationError("lattice needs at least 2 points per axis")

    @property
    def grid(self) -> GridSpec:
        n_rows, n_cols = self.grid_shape
        return GridSpec.covering(self.x_range, self.y_range, n_cols, n_rows)

    @property
    def ranges(self) -> tuple:
        return (tuple(self.theta1_range), tuple(self.theta2_range))

    def truth_unit(self) -> np.ndarray:
        return np.array([(t - lo) / (hi - lo) for t, (lo, hi) in zip(self.truth, self.ranges)])


def radicand(theta, coords: np.ndarray) -> np.ndarray:
    t1, t2 = theta
    s1, s2 = coords[:, 0], coords[:, 1]
    return 1.0 - s1 ** 2 - (s2 / 1.5) ** 2 - t1 + t2 * (s2 + 1.5)


def synth_output(theta, grid: GridSpec, cfg: SyntheticConfig | None = None) -> BinaryField:
    """Binary output at native ``theta``; the radicand must be strictly positive."""
    cfg = cfg or SyntheticConfig()
    for t, (lo, hi) in zip(theta, cfg.ranges):
        if not lo <= t <= hi:
            raise ValidationError(f"theta {tuple(theta)} outside {cfg.ranges}")
    return BinaryField(grid, (radicand(theta, grid.coordinates()) > 0).astype(np.int8))


def lattice_design(cfg: SyntheticConfig) -> DesignMatrix:
    a, b = cfg.lattice
    u1, u2 = np.meshgrid(np.linspace(0, 1, a), np.linspace(0, 1, b), indexing="ij")
    pts = np.column_stack([u1.ravel(), u2.ravel()])
    return DesignMatrix(pts, ("theta_1", "theta_2"), cfg.ranges, (False, False))


def unit_to_native(cfg: SyntheticConfig, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    lo = np.array([r[0] for r in cfg.ranges])
    hi = np.array([r[1] for r in cfg.ranges])
    return lo + u * (hi - lo)


def synth_ensemble(cfg: SyntheticConfig | None = None) -> EnsembleMatrix:
    cfg = cfg or SyntheticConfig()
    design = lattice_design(cfg)
    grid = cfg.grid
    coords = grid.coordinates()
    rows = [radicand(unit_to_native(cfg, u), coords) > 0 for u in design.points]
    return EnsembleMatrix(design, grid, np.array(rows, dtype=np.int8))


def sample_gp_field(grid: GridSpec, sill: float, range: float, nugget: float,
                    seed=None) -> np.ndarray:
    """One draw of a zero-mean GP with exponential covariance on the grid.

    Distances are Euclidean in native grid coordinates.
    """
    if sill <= 0 or range <= 0 or nugget < 0:
        raise ValidationError("sample_gp_field needs sill > 0, range > 0, nugget >= 0")
    coords = grid.coordinates()
    cov = sill * np.exp(-cdist(coords, coords) / range)
    cov[np.diag_indices_from(cov)] += nugget
    try:
        L = cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"GP covariance not positive definite: {exc}") from None
    rng = np.random.default_rng(seed)
    return L @ rng.standard_normal(grid.n)


def clean_logits(cfg: SyntheticConfig) -> np.ndarray:
    y = synth_output(cfg.truth, cfg.grid, cfg).values
    return cfg.saturation_logit * (2.0 * y - 1.0)


def make_observation(cfg: SyntheticConfig | None = None):
    """Contaminated observation at the truth and the discrepancy that produced it."""
    cfg = cfg or SyntheticConfig()
    base = clean_logits(cfg)
    if cfg.sill == 0 and cfg.nugget == 0:
        noise = np.zeros(cfg.grid.n)
    else:
        noise = sample_gp_field(cfg.grid, max(cfg.sill, 1e-300), cfg.range, cfg.nugget, cfg.seed)
    obs = (base + noise > 0).astype(np.int8)
    return BinaryField(cfg.grid, obs), noise


def ice_volume(theta, grid: GridSpec) -> float:
    """Smooth scalar response: integral of ``U`` over the grid (a volume proxy)."""
    r = radicand(theta, grid.coordinates())
    return float(np.sum(np.sqrt(np.clip(r, 0, None))) * grid.cell_size[0] * grid.cell_size[1])
