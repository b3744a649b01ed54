"""Logistic principal component analysis fitted by majorization-minimization.

The logit matrix of a binary ensemble is factored as
``Gamma = 1 mu^T + W K^T`` with ``W`` (p x J) having orthonormal columns and
``K`` (n x J) carrying the scale. Each MM iteration replaces the Bernoulli
negative log-likelihood by the quadratic bound
``-log g(x) <= -log g(y) + (x - y - 4 (1 - g(y)))**2 / 8`` and minimizes it
in closed form, block by block.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .core import EnsembleMatrix, ValidationError, load_matrix, save_matrix

log = logging.getLogger(__name__)

LOGIT_CLAMP = 30.0


def sigmoid(x):
    """Logistic function ``1 / (1 + exp(-x))``; overflow-free for any finite x."""
    return expit(x)


def _ystar(Y) -> np.ndarray:
    vals = Y.values if isinstance(Y, EnsembleMatrix) else np.asarray(Y)
    return 2.0 * vals.astype(float) - 1.0


def majorizer(x, y):
    """Quadratic upper bound of ``-log g(x)`` touching it at ``x == y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -log_expit(y) + 0.125 * (x - y - 4.0 * (1.0 - expit(y))) ** 2 - 2.0 * (1.0 - expit(y)) ** 2


@dataclass(frozen=True)
class LogisticPcaModel:
    mu: np.ndarray
    basis: np.ndarray
    scores: np.ndarray
    deviance_trace: tuple = ()
    converged: bool = True
    final_rel_change: float = 0.0
    options: dict = field(default_factory=dict)

    @property
    def j_y(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def p(self) -> int:
        return self.scores.shape[0]

    def logits(self) -> np.ndarray:
        return self.mu[None, :] + self.scores @ self.basis.T


@dataclass(frozen=True)
class MmState:
    iteration: int
    mu: np.ndarray
    basis: np.ndarray
    scores: np.ndarray
    working: np.ndarray | None = None

    def logits(self) -> np.ndarray:
        return self.mu[None, :] + self.scores @ self.basis.T


def neg_log_lik(Y, model) -> float:
    """Bernoulli negative log-likelihood ``-sum log g(y* gamma)``."""
    ys = _ystar(Y)
    gamma = model.logits()
    if gamma.shape != ys.shape:
        raise ValidationError(f"model logits {gamma.shape} do not match ensemble {ys.shape}")
    return float(-np.sum(log_expit(ys * gamma)))


def working_matrix(ys: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    g = np.clip(gamma, -LOGIT_CLAMP, LOGIT_CLAMP)
    return g + 4.0 * ys * (1.0 - expit(ys * g))


def mm_step(Y, state: MmState) -> MmState:
    """One MM sweep: working matrix, then mean, scores (via SVD), basis."""
    ys = _ystar(Y)
    if state.mu.shape[0] != ys.shape[1] or state.scores.shape[0] != ys.shape[0]:
        raise ValidationError("state dimensions do not match the ensemble")
    W, K = state.scores, state.basis
    X = working_matrix(ys, state.logits())
    p = X.shape[0]

    mu = (X - W @ K.T).T @ np.ones(p) / p
    A = X - mu[None, :]
    try:
        # A K (K^T K)^-1 as a least-squares solve; the pseudo-inverse covers
        # rank-deficient K (e.g. an SVD start with fewer than J_y nonzero values)
        W_star = np.linalg.lstsq(K, A.T, rcond=None)[0].T
        U, _, Vt = np.linalg.svd(W_star, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"rank-deficient score update: {exc}") from None
    W_new = U @ Vt
    K_new = A.T @ W_new
    return MmState(state.iteration + 1, mu, K_new, W_new, X)


def initial_state(Y, j_y: int, rng=None) -> MmState:
    """SVD start on the centred +/-1 matrix.

    With ``rng`` given, the scores are replaced by a random orthonormal
    perturbation of the SVD scores (used for restarts).
    """
    ys = _ystar(Y)
    mu = ys.mean(axis=0)
    U, s, Vt = np.linalg.svd(ys - mu[None, :], full_matrices=False)
    W = U[:, :j_y]
    K = 4.0 * Vt[:j_y].T * s[:j_y]
    if rng is not None:
        noise = rng.standard_normal(W.shape) * 0.5
        W, _ = np.linalg.qr(W + noise)
    return MmState(1, mu, K, W)


def _fit_from(Y, state: MmState, max_iter: int, rel_tol: float):
    trace = [neg_log_lik(Y, state)]
    converged, rel = False, np.inf
    for _ in range(max_iter):
        state = mm_step(Y, state)
        trace.append(neg_log_lik(Y, state))
        rel = abs(trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
        if rel < rel_tol:
            converged = True
            break
    return state, trace, converged, rel


def fit(Y, j_y: int, max_iter: int = 2000, rel_tol: float = 1e-6,
        restarts: int = 1, seed: int = 0, init: MmState | None = None) -> LogisticPcaModel:
    """Fit logistic PCA with ``j_y`` components.

    The first start is the deterministic SVD start (or ``init``); each extra
    restart perturbs it with a seeded random orthonormal rotation. The fit
    with the lowest final negative log-likelihood wins. A fit that hits
    ``max_iter`` is still returned, with ``converged=False``.
    """
    ys = _ystar(Y)
    p, n = ys.shape
    if not 1 <= j_y <= min(p, n):
        raise ValidationError(f"j_y must lie in [1, {min(p, n)}], got {j_y}")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for r in range(restarts):
        start = init if (init is not None and r == 0) else initial_state(Y, j_y, rng if r else None)
        state, trace, converged, rel = _fit_from(Y, start, max_iter, rel_tol)
        if best is None or trace[-1] < best[1][-1]:
            best = (state, trace, converged, rel)
    state, trace, converged, rel = best
    if not converged:
        log.warning("logistic PCA stopped after %d iterations, relative change %.3g",
                    max_iter, rel)
    opts = {"max_iter": max_iter, "rel_tol": rel_tol, "restarts": restarts, "seed": seed}
    return LogisticPcaModel(state.mu, state.basis, state.scores, tuple(trace),
                            converged, float(rel), opts)


def reconstruct(model: LogisticPcaModel, row) -> np.ndarray:
    """Logit field ``mu + K w`` for a training row index or a score vector."""
    if isinstance(row, (int, np.integer)):
        w = model.scores[row]
    else:
        w = np.asarray(row, dtype=float)
        if w.shape != (model.j_y,):
            raise ValidationError(f"score vector must have length {model.j_y}")
    return model.mu + model.basis @ w


def misclassification(Y, model: LogisticPcaModel) -> float:
    """Fraction of cells whose dichotomized reconstruction disagrees with Y."""
    vals = Y.values if isinstance(Y, EnsembleMatrix) else np.asarray(Y)
    return float(np.mean((model.logits() >= 0).astype(int) != vals))


def save_model(model: LogisticPcaModel, path, extra: dict | None = None) -> None:
    """JSON header at ``path`` plus ``<stem>.mu.csv``, ``.basis.csv``, ``.scores.csv``."""
    path = Path(path)
    stem = path.with_suffix("")
    header = {"p": model.p, "n": model.n, "j_y": model.j_y, "options": model.options,
              "converged": model.converged, "final_rel_change": model.final_rel_change,
              "deviance_trace": list(model.deviance_trace),
              "blocks": {k: f"{stem.name}.{k}.csv" for k in ("mu", "basis", "scores")}}
    header.update(extra or {})
    save_matrix(f"{stem}.mu.csv", model.mu[:, None], "mu")
    save_matrix(f"{stem}.basis.csv", model.basis, "k")
    save_matrix(f"{stem}.scores.csv", model.scores, "w")
    path.write_text(json.dumps(header, indent=2))


def load_model(path) -> LogisticPcaModel:
    path = Path(path)
    header = json.loads(path.read_text())
    blocks = {k: load_matrix(path.parent / v) for k, v in header["blocks"].items()}
    return LogisticPcaModel(blocks["mu"][:, 0], blocks["basis"], blocks["scores"],
                            tuple(header["deviance_trace"]), header["converged"],
                            header["final_rel_change"], header["options"])
