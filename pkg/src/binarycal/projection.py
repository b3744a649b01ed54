"""Scalar-response emulation and push-forward of calibrated parameter samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import Chain
from .core import DesignMatrix, ValidationError
from .emulator import PcGpHyper, PcGpModel, mle_hyper

MODES = ("sample-predictive", "mean-plug-in")


@dataclass(frozen=True)
class ScalarGp:
    design: DesignMatrix
    response: np.ndarray
    hyper: PcGpHyper
    mean_const: float
    gp: PcGpModel

    def predict(self, X):
        mean, sd = self.gp.predict(X)
        if np.ptp(self.response) == 0:
            # a flat response carries no variance; kappa sits at its bound only numerically
            sd = np.zeros_like(sd)
        return mean, sd


def fit_scalar(design: DesignMatrix, response, restarts: int = 5, seed: int = 0,
               nugget: bool = True) -> ScalarGp:
    """Constant-mean exponential-covariance GP; mean profiled by GLS, rest by MLE.

    ``nugget=False`` pins the nugget at its lower bound.
    """
    y = np.asarray(response, dtype=float)
    p, d = design.points.shape
    if p < d + 2:
        raise ValidationError(f"need p >= d + 2 design points, got p={p}, d={d}")
    if y.shape != (p,) or not np.all(np.isfinite(y)):
        raise ValidationError("response must be finite with one value per design point")
    if np.ptp(y) == 0:
        # flat response: nothing to learn beyond the level
        h = PcGpHyper(float(np.exp(-8.0)), (1.0,) * d, float(np.exp(-12.0)))
        gp = PcGpModel(h, design.points, y, float(y[0]), float("nan"), True)
        return ScalarGp(design, y, h, float(y[0]), gp)
    scale = float(np.std(y))
    ys = y / scale
    h, m, ll, ok = mle_hyper(ys, design.points, restarts=restarts, seed=seed, constant_mean=True)
    if not nugget:
        h = PcGpHyper(h.kappa, h.phi, float(np.exp(-12.0)))
    h = PcGpHyper(h.kappa * scale ** 2, h.phi, h.zeta * scale ** 2)
    gp = PcGpModel(h, design.points, y, m * scale, ll, ok)
    return ScalarGp(design, y, h, m * scale, gp)


def summarize(samples) -> dict:
    s = np.asarray(samples, dtype=float)
    q = np.percentile(s, [2.5, 50, 97.5])
    return {"n": int(s.size), "mean": float(s.mean()), "p2.5": float(q[0]),
            "p50": float(q[1]), "p97.5": float(q[2]),
            "min": float(s.min()), "max": float(s.max())}


def _push(thetas, sgp: ScalarGp, mode: str, rng) -> np.ndarray:
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    mean, sd = sgp.predict(thetas)
    if mode == "mean-plug-in":
        return mean
    return mean + sd * rng.standard_normal(mean.shape[0])


def project_chain(chain, sgp: ScalarGp, mode: str = "sample-predictive", seed: int = 0,
                  batch: int = 4096):
    """Turn theta samples into predictive response samples plus a summary."""
    th = chain.theta if isinstance(chain, Chain) else np.atleast_2d(np.asarray(chain, dtype=float))
    if th.shape[0] == 0:
        raise ValidationError("empty chain")
    if th.shape[1] != sgp.design.d:
        raise ValidationError("chain dimension does not match the emulator design")
    rng = np.random.default_rng(seed)
    out = np.concatenate([_push(th[i:i + batch], sgp, mode, rng)
                          for i in range(0, th.shape[0], batch)])
    summary = summarize(out)
    summary["mode"] = mode
    return out, summary


def uncalibrated_baseline(design: DesignMatrix, sgp: ScalarGp, m: int, seed: int = 0,
                          bounds=None, mode: str = "sample-predictive"):
    """Push ``m`` uniform draws over the prior box through the emulator."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    rng = np.random.default_rng(seed)
    bounds = np.asarray(bounds if bounds is not None else [(0.0, 1.0)] * design.d, dtype=float)
    th = rng.uniform(bounds[:, 0], bounds[:, 1], size=(m, design.d))
    out = _push(th, sgp, mode, rng)
    summary = summarize(out)
    summary["mode"] = mode
    return out, summary
