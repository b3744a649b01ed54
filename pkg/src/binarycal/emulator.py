"""Per-component Gaussian-process emulators for logistic PC scores."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from . import lpca as _lpca
from .core import BinaryField, DesignMatrix, EnsembleMatrix, GridSpec, ValidationError, save_vector

log = logging.getLogger(__name__)

LOG_KAPPA_BOUNDS = (-8.0, 8.0)
LOG_PHI_BOUNDS = (-6.0, 4.0)
LOG_ZETA_BOUNDS = (-12.0, 2.0)
JITTER = 1e-10


@dataclass(frozen=True)
class PcGpHyper:
    kappa: float
    phi: tuple
    zeta: float = 0.0

    def __post_init__(self):
        phi = tuple(float(v) for v in np.atleast_1d(self.phi))
        object.__setattr__(self, "phi", phi)
        if not (self.kappa > 0 and all(v > 0 for v in phi) and self.zeta >= 0):
            raise ValidationError("need kappa > 0, phi > 0, zeta >= 0")
        if not all(map(math.isfinite, (self.kappa, self.zeta, *phi))):
            raise ValidationError("hyperparameters must be finite")

    def to_log(self) -> np.ndarray:
        return np.log([self.kappa, *self.phi, self.zeta])

    @classmethod
    def from_log(cls, z) -> "PcGpHyper":
        z = np.asarray(z, dtype=float)
        return cls(float(np.exp(z[0])), tuple(np.exp(z[1:-1])), float(np.exp(z[-1])))

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "phi": list(self.phi), "zeta": self.zeta}


def cov_exp(a, b, h: PcGpHyper) -> float:
    """``kappa * exp(-sum |a_i - b_i| / phi_i) + zeta * 1(a == b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = float(np.sum(np.abs(a - b) / np.asarray(h.phi)))
    out = h.kappa * math.exp(-r)
    if np.array_equal(a, b):
        out += h.zeta
    return out


def cross_cov(A: np.ndarray, B: np.ndarray, kappa, phi, zeta=0.0) -> np.ndarray:
    """Covariance matrix between point sets; nugget added where rows are bitwise equal."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    phi = np.asarray(phi, dtype=float)
    r = np.sum(np.abs(A[:, None, :] - B[None, :, :]) / phi, axis=-1)
    C = kappa * np.exp(-r)
    if zeta:
        C = C + zeta * np.all(A[:, None, :] == B[None, :, :], axis=-1)
    return C


def _chol(S: np.ndarray):
    try:
        return cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        S = S + JITTER * np.eye(S.shape[0])
        return cho_factor(S, lower=True, check_finite=False)


class _Pairs:
    """Pairwise |x_i - x_j| per coordinate and the equality mask, computed once."""

    def __init__(self, X):
        X = np.atleast_2d(X)
        self.absdiff = np.abs(X[:, None, :] - X[None, :, :]).transpose(2, 0, 1).copy()
        self.same = np.all(X[:, None, :] == X[None, :, :], axis=-1)

    def cov(self, kappa, phi, zeta):
        r = np.tensordot(1.0 / np.asarray(phi, dtype=float), self.absdiff, axes=1)
        return kappa * np.exp(-r) + zeta * self.same


def gp_loglik(y: np.ndarray, X, h: PcGpHyper, mean: float = 0.0) -> float:
    """Gaussian log-likelihood of ``y`` under the exponential covariance on ``X``."""
    if isinstance(X, _Pairs):
        S = X.cov(h.kappa, h.phi, h.zeta)
    else:
        S = cross_cov(X, X, h.kappa, h.phi, h.zeta)
    try:
        c = _chol(S)
    except np.linalg.LinAlgError:
        return -np.inf
    r = y - mean
    alpha = cho_solve(c, r, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return float(-0.5 * (r @ alpha + logdet + len(y) * math.log(2 * math.pi)))


def _bounds(d):
    return [LOG_KAPPA_BOUNDS] + [LOG_PHI_BOUNDS] * d + [LOG_ZETA_BOUNDS]


def _gls_mean(y, X, h) -> float:
    S = X.cov(h.kappa, h.phi, h.zeta) if isinstance(X, _Pairs) else cross_cov(X, X, h.kappa, h.phi, h.zeta)
    c = _chol(S)
    one = np.ones(len(y))
    a = cho_solve(c, one, check_finite=False)
    return float(a @ y / (a @ one))


def mle_hyper(y, X, restarts: int = 5, seed: int = 0, constant_mean: bool = False,
              start=None):
    """Maximize the GP log-likelihood over log-hyperparameters.

    Nelder-Mead within the box bounds, ``restarts`` seeded starts (the first
    at ``start`` or a data-driven default) plus a final polish from the best.
    With ``constant_mean`` the mean is profiled out by GLS at each step.
    Returns ``(hyper, mean, loglik, success)``.
    """
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(X)
    d = X.shape[1]
    bounds = _bounds(d)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    pairs = _Pairs(X)

    def objective(z):
        if np.any(z < lo) or np.any(z > hi):
            return 1e300
        h = PcGpHyper.from_log(z)
        m = _gls_mean(y, pairs, h) if constant_mean else 0.0
        ll = gp_loglik(y, pairs, h, m)
        return -ll if np.isfinite(ll) else 1e300

    rng = np.random.default_rng(seed)
    var = float(np.var(y)) if np.var(y) > 0 else 1.0
    if start is None:
        start = np.array([math.log(var)] + [math.log(0.3)] * d + [math.log(1e-3 * var)])
    start = np.clip(start, lo, hi)
    starts = [start] + [rng.uniform(lo, hi) for _ in range(max(restarts, 1) - 1)]
    opts = {"xatol": 1e-7, "fatol": 1e-9, "maxiter": 4000 * (d + 2), "maxfev": 8000 * (d + 2)}
    best = None
    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead", bounds=bounds, options=opts)
        if best is None or res.fun < best.fun:
            best = res
    polish = minimize(objective, best.x, method="Nelder-Mead", bounds=bounds, options=opts)
    if polish.fun <= best.fun:
        best = polish
    h = PcGpHyper.from_log(best.x)
    m = _gls_mean(y, X, h) if constant_mean else 0.0
    return h, m, -float(best.fun), bool(best.success)


@dataclass(frozen=True)
class PcGpModel:
    hyper: PcGpHyper
    points: np.ndarray
    scores: np.ndarray
    mean_const: float = 0.0
    loglik: float = float("nan")
    converged: bool = True
    _chol: tuple = field(default=None, repr=False, compare=False)
    _alpha: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        h = self.hyper
        c = _chol(cross_cov(pts, pts, h.kappa, h.phi, h.zeta))
        object.__setattr__(self, "_chol", c)
        object.__setattr__(self, "_alpha", cho_solve(c, self.scores - self.mean_const))

    @property
    def chol(self) -> np.ndarray:
        return np.tril(self._chol[0])

    def predict(self, X):
        """Kriging mean and sd at each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h = self.hyper
        C = cross_cov(X, self.points, h.kappa, h.phi, h.zeta)
        mean = self.mean_const + C @ self._alpha
        V = solve_triangular(self._chol[0], C.T, lower=True, check_finite=False)
        var = h.kappa + h.zeta - np.sum(V * V, axis=0)
        return mean, np.sqrt(np.maximum(var, 0.0))


def fit_pc_gp(scores, design, restarts: int = 5, seed: int = 0) -> PcGpModel:
    """Zero-mean exponential-covariance GP fitted to one score column by MLE."""
    pts = design.points if isinstance(design, DesignMatrix) else np.atleast_2d(design)
    scores = np.asarray(scores, dtype=float)
    p, d = pts.shape
    if p < d + 2:
        raise ValidationError(f"need p >= d + 2 design points, got p={p}, d={d}")
    if scores.shape != (p,) or not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be a finite vector with one entry per design point")
    h, _, ll, ok = mle_hyper(scores, pts, restarts=restarts, seed=seed)
    if not ok:
        log.warning("GP hyperparameter search did not report convergence")
    return PcGpModel(h, pts, scores, 0.0, ll, ok)


def predict_pc(model: PcGpModel, point):
    mean, sd = model.predict(np.asarray(point, dtype=float)[None, :])
    return float(mean[0]), float(sd[0])


@dataclass(frozen=True)
class EmulatorPrediction:
    mean: np.ndarray
    sd: np.ndarray


@dataclass(frozen=True)
class Emulator:
    """Logistic-PCA model plus one fitted GP per component."""
    lpca: _lpca.LogisticPcaModel
    gps: tuple

    def __post_init__(self):
        if len(self.gps) != self.lpca.j_y:
            raise ValidationError(f"need {self.lpca.j_y} GPs, got {len(self.gps)}")

    def predict(self, point) -> EmulatorPrediction:
        x = np.asarray(point, dtype=float)[None, :]
        out = [gp.predict(x) for gp in self.gps]
        return EmulatorPrediction(np.array([m[0] for m, _ in out]),
                                  np.array([s[0] for _, s in out]))


def fit_emulator(lpca_model, design, restarts: int = 5, seed: int = 0,
                 threads: int = 1) -> Emulator:
    """Fit the ``J_y`` component GPs; they are independent, so run them concurrently."""
    ss = np.random.SeedSequence(seed).generate_state(lpca_model.j_y)

    def one(k):
        gp = fit_pc_gp(lpca_model.scores[:, k], design, restarts, int(ss[k]))
        log.info("component %d: kappa=%.4g phi=%s zeta=%.4g loglik=%.4f", k + 1,
                 gp.hyper.kappa, np.round(gp.hyper.phi, 5).tolist(), gp.hyper.zeta, gp.loglik)
        return gp

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            gps = tuple(ex.map(one, range(lpca_model.j_y)))
    else:
        gps = tuple(one(k) for k in range(lpca_model.j_y))
    return Emulator(lpca_model, gps)


def emulate_probability_field(lpca_model, gps, point) -> np.ndarray:
    """Plug-in probability field ``g(mu + K m(theta))`` at one design-space point."""
    if len(gps) != lpca_model.j_y:
        raise ValidationError(f"need {lpca_model.j_y} GPs, got {len(gps)}")
    x = np.asarray(point, dtype=float)[None, :]
    means = np.array([gp.predict(x)[0][0] for gp in gps])
    return _lpca.sigmoid(lpca_model.mu + lpca_model.basis @ means)


def dichotomize(probs, threshold: float = 0.5, grid: GridSpec | None = None) -> BinaryField:
    probs = np.asarray(probs, dtype=float)
    vals = (probs >= threshold).astype(np.int8)
    return BinaryField(grid or GridSpec(1, vals.size), vals)


@dataclass
class CvReport:
    run_misclassification: np.ndarray
    overall: float
    folds: list = field(default_factory=list)
    j_y: int = 0


def cross_validate(Y: EnsembleMatrix, j_y: int, fold_fraction: float = 0.1, seed: int = 0,
                   lpca_opts: dict | None = None, gp_restarts: int = 5,
                   threads: int = 1) -> CvReport:
    """Leave-``fold_fraction``-out cross-validation of the full emulator.

    Runs are shuffled once and split into consecutive folds of
    ``ceil(fold_fraction * p)``; every run is held out exactly once.
    """
    if not 0 < fold_fraction <= 0.5:
        raise ValidationError("fold_fraction must lie in (0, 0.5]")
    p = Y.p
    k = math.ceil(fold_fraction * p)
    if p - k < max(Y.design.d + 2, j_y):
        raise ValidationError("fold too small to fit: too few training runs remain")
    rng = np.random.default_rng(seed)
    order = rng.permutation(p)
    folds = [order[i:i + k] for i in range(0, p, k)]
    per_run = np.zeros(p)
    lpca_opts = dict(lpca_opts or {})
    for f, held in enumerate(folds):
        train = np.setdiff1d(np.arange(p), held)
        sub = Y.subset(train)
        model = _lpca.fit(sub, j_y, **lpca_opts)
        emu = fit_emulator(model, sub.design, gp_restarts, seed + f, threads)
        for i in held:
            probs = emulate_probability_field(model, emu.gps, Y.design.points[i])
            per_run[i] = np.mean((probs >= 0.5).astype(np.int8) != Y.values[i])
        log.info("fold %d/%d: held-out misclassification %.4f", f + 1, len(folds),
                 per_run[held].mean())
    return CvReport(per_run, float(per_run.mean()), [list(map(int, h)) for h in folds], j_y)


def save_emulator(emu: Emulator, path, lpca_path: str, extra: dict | None = None) -> None:
    """JSON artifact: per-component hyperparameters, training scores and design."""
    doc = {"lpca": str(lpca_path), "j_y": emu.lpca.j_y,
           "design": emu.gps[0].points.tolist(),
           "components": [{"hyper": gp.hyper.to_dict(), "loglik": gp.loglik,
                           "converged": gp.converged, "scores": gp.scores.tolist()}
                          for gp in emu.gps]}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2))


def load_emulator(path, lpca_model=None) -> Emulator:
    path = Path(path)
    doc = json.loads(path.read_text())
    if lpca_model is None:
        lp = Path(doc["lpca"])
        lpca_model = _lpca.load_model(lp if lp.is_absolute() else path.parent / lp)
    pts = np.asarray(doc["design"], dtype=float)
    gps = tuple(PcGpModel(PcGpHyper(c["hyper"]["kappa"], tuple(c["hyper"]["phi"]),
                                    c["hyper"]["zeta"]),
                          pts, np.asarray(c["scores"]), 0.0, c["loglik"], c["converged"])
                for c in doc["components"])
    return Emulator(lpca_model, gps)


def save_cv_report(report: CvReport, path) -> None:
    save_vector(path, {"run": np.arange(len(report.run_misclassification)),
                       "misclassification": report.run_misclassification})
