"""Posterior over (theta, eta, v, sigma_d^2) and a block Metropolis-Hastings sampler.

The observation logits are ``lambda = mu + K_y eta + k_d v``. Priors: uniform
``theta`` on a box, ``eta_k ~ N(m_k(theta), s_k(theta)^2)`` from the emulator,
``v ~ N(0, sigma_d^2)`` and ``sigma_d^2 ~ IG(a_d, b_d)``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import cholesky
from scipy.special import gammaln, log_expit, expit

from .core import BinaryField, ValidationError
from .discrepancy import DiscrepancyBasis

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-12
LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    theta_bounds: tuple
    a_d: float = 2.0
    b_d: float = 3.0

    def __post_init__(self):
        b = np.asarray(self.theta_bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValidationError("theta_bounds must be a sequence of (low, high) pairs")
        if np.any(b[:, 0] >= b[:, 1]) or b.min() < 0 or b.max() > 1:
            raise ValidationError("theta bounds must satisfy 0 <= low < high <= 1")
        if self.a_d <= 0 or self.b_d <= 0:
            raise ValidationError("a_d and b_d must be positive")
        object.__setattr__(self, "theta_bounds", tuple(map(tuple, b.tolist())))

    @classmethod
    def unit(cls, d: int, **kw) -> "PriorConfig":
        return cls(((0.0, 1.0),) * d, **kw)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.theta_bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.theta_bounds])

    def log_theta_density(self) -> float:
        return -float(np.sum(np.log(self.upper - self.lower)))


@dataclass(frozen=True)
class CalibState:
    theta: np.ndarray
    eta: np.ndarray
    v: float
    sigma2_d: float


def observation_log_lik(Z, lam) -> float:
    """``sum_j z_j lam_j - log(1 + exp(lam_j))``, overflow-safe."""
    z = Z.values if isinstance(Z, BinaryField) else np.asarray(Z)
    lam = np.asarray(lam, dtype=float)
    if z.shape != lam.shape:
        raise ValidationError("observation and logit lengths differ")
    return float(np.sum(log_expit(np.where(z == 1, lam, -lam))))


def log_inv_gamma(x: float, a: float, b: float) -> float:
    return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x


class CalibrationProblem:
    """Everything the posterior needs, with the emulator pieces precomputed.

    ``use_likelihood=False`` drops the observation term (prior-only runs).
    """

    def __init__(self, Z, lpca, gps, basis, priors: PriorConfig, use_likelihood=True):
        z = Z.values if isinstance(Z, BinaryField) else np.asarray(Z)
        if len(gps) != lpca.j_y:
            raise ValidationError(f"need {lpca.j_y} GPs, got {len(gps)}")
        k_d = basis.k_d if isinstance(basis, DiscrepancyBasis) else np.asarray(basis, dtype=float)
        if z.shape[0] != lpca.n or k_d.shape[0] != lpca.n:
            raise ValidationError("observation, basis and lpca dimensions disagree")
        if len(priors.theta_bounds) != gps[0].points.shape[1]:
            raise ValidationError("prior dimension does not match the design")
        self.z = z.astype(np.int8)
        self.sign = np.where(self.z == 1, 1.0, -1.0)
        self.mu = lpca.mu
        self.K = lpca.basis
        self.k_d = k_d
        self.priors = priors
        self.use_likelihood = use_likelihood
        self.d = len(priors.theta_bounds)
        self.j_y = lpca.j_y
        # stacked GP pieces for vectorized prediction at one point
        self._pts = gps[0].points
        if not all(np.array_equal(g.points, self._pts) for g in gps):
            raise ValidationError("all component GPs must share one design")
        self._kappa = np.array([g.hyper.kappa for g in gps])
        self._zeta = np.array([g.hyper.zeta for g in gps])
        self._inv_phi = np.array([1.0 / np.asarray(g.hyper.phi) for g in gps])
        self._alpha = np.array([g._alpha for g in gps])
        self._mean0 = np.array([g.mean_const for g in gps])
        self._Linv = np.array([np.linalg.inv(np.tril(g._chol[0])) for g in gps])
        self._log_theta = priors.log_theta_density()

    # -- emulator
    def emulate(self, theta):
        """Predictive mean and variance of every component at ``theta``."""
        diff = np.abs(self._pts - theta)                        # p x d
        C = self._kappa[:, None] * np.exp(-diff @ self._inv_phi.T).T   # J x p
        same = np.all(self._pts == theta, axis=1)
        if same.any():
            C = C + self._zeta[:, None] * same[None, :]
        mean = self._mean0 + np.einsum("jp,jp->j", C, self._alpha)
        V = np.einsum("jqp,jp->jq", self._Linv, C)
        var = self._kappa + self._zeta - np.einsum("jq,jq->j", V, V)
        return mean, np.maximum(var, VAR_FLOOR)

    def in_support(self, theta, sigma2) -> bool:
        return bool(np.all(theta >= self.priors.lower) and np.all(theta <= self.priors.upper)
                    and sigma2 > 0)

    def lam(self, eta, v) -> np.ndarray:
        return self.mu + self.K @ eta + self.k_d * v

    def loglik(self, lam) -> float:
        if not self.use_likelihood:
            return 0.0
        return float(np.sum(log_expit(self.sign * lam)))

    @staticmethod
    def eta_logpdf(eta, mean, var) -> float:
        return float(-0.5 * np.sum((eta - mean) ** 2 / var + np.log(var) + LOG_2PI))

    def v_logpdf(self, v, sigma2) -> float:
        return -0.5 * (v * v / sigma2 + math.log(sigma2) + LOG_2PI)

    def sigma_logpdf(self, sigma2) -> float:
        return log_inv_gamma(sigma2, self.priors.a_d, self.priors.b_d)

    def log_posterior(self, state: CalibState) -> float:
        theta = np.asarray(state.theta, dtype=float)
        if not self.in_support(theta, state.sigma2_d):
            return -np.inf
        mean, var = self.emulate(theta)
        return (self.loglik(self.lam(state.eta, state.v))
                + self.eta_logpdf(state.eta, mean, var)
                + self.v_logpdf(state.v, state.sigma2_d)
                + self._log_theta
                + self.sigma_logpdf(state.sigma2_d))


def log_posterior(state, Z, lpca, gps, basis, priors, use_likelihood=True) -> float:
    return CalibrationProblem(Z, lpca, gps, basis, priors, use_likelihood).log_posterior(state)


def accept(log_ratio: float, rng) -> bool:
    """Metropolis acceptance test."""
    u = rng.random()
    return log_ratio >= 0 or math.log(u) < log_ratio


@dataclass
class Proposal:
    """Random-walk scales per block.

    The theta and eta steps are ``scale * (chol @ N(0, I))``; ``*_chol`` fix
    the shape, the scalar scales are what adaptation tunes.
    """
    theta_scale: float
    eta_scale: float
    v_scale: float
    log_sigma2_scale: float
    theta_chol: np.ndarray
    eta_chol: np.ndarray
    carry_eta: bool = True

    def as_dict(self) -> dict:
        return {"theta": self.theta_scale, "eta": self.eta_scale, "v": self.v_scale,
                "log_sigma2": self.log_sigma2_scale, "carry_eta": self.carry_eta}


BLOCKS = ("theta", "eta", "v", "log_sigma2")


class _Cursor:
    """Current state plus cached emulator output and logits."""
    __slots__ = ("theta", "eta", "v", "sigma2", "mean", "var", "lam", "ll")

    def __init__(self, prob: CalibrationProblem, s: CalibState):
        self.theta = np.array(s.theta, dtype=float)
        self.eta = np.array(s.eta, dtype=float)
        self.v = float(s.v)
        self.sigma2 = float(s.sigma2_d)
        self.mean, self.var = prob.emulate(self.theta)
        self.lam = prob.lam(self.eta, self.v)
        self.ll = prob.loglik(self.lam)

    def state(self) -> CalibState:
        return CalibState(self.theta.copy(), self.eta.copy(), self.v, self.sigma2)

    def log_post(self, prob) -> float:
        return (self.ll + prob.eta_logpdf(self.eta, self.mean, self.var)
                + prob.v_logpdf(self.v, self.sigma2) + prob._log_theta
                + prob.sigma_logpdf(self.sigma2))


def _sweep(prob: CalibrationProblem, cur: _Cursor, prop: Proposal, rng) -> np.ndarray:
    acc = np.zeros(4, dtype=bool)

    # theta block; with carry_eta, eta keeps its standardized position under the emulator
    z = rng.standard_normal(prob.d)
    th = cur.theta + prop.theta_scale * (prop.theta_chol @ z)
    if prob.in_support(th, cur.sigma2):
        mean, var = prob.emulate(th)
        if prop.carry_eta:
            eta = mean + np.sqrt(var / cur.var) * (cur.eta - cur.mean)
            lam = prob.lam(eta, cur.v)
            ll = prob.loglik(lam)
            jac = 0.5 * float(np.sum(np.log(var / cur.var)))
            ratio = (ll - cur.ll + prob.eta_logpdf(eta, mean, var)
                     - prob.eta_logpdf(cur.eta, cur.mean, cur.var) + jac)
        else:
            eta, lam, ll = cur.eta, cur.lam, cur.ll
            ratio = (prob.eta_logpdf(eta, mean, var)
                     - prob.eta_logpdf(cur.eta, cur.mean, cur.var))
        if accept(ratio, rng):
            cur.theta, cur.mean, cur.var = th, mean, var
            cur.eta, cur.lam, cur.ll = eta, lam, ll
            acc[0] = True
    else:
        rng.random()

    # eta block
    z = rng.standard_normal(prob.j_y)
    step = prop.eta_scale * (prop.eta_chol @ z)
    eta = cur.eta + step
    lam = cur.lam + prob.K @ step
    ll = prob.loglik(lam)
    ratio = (ll - cur.ll + prob.eta_logpdf(eta, cur.mean, cur.var)
             - prob.eta_logpdf(cur.eta, cur.mean, cur.var))
    if accept(ratio, rng):
        cur.eta, cur.lam, cur.ll = eta, lam, ll
        acc[1] = True

    # discrepancy coefficient
    v = cur.v + prop.v_scale * rng.standard_normal()
    lam = cur.lam + prob.k_d * (v - cur.v)
    ll = prob.loglik(lam)
    ratio = ll - cur.ll + prob.v_logpdf(v, cur.sigma2) - prob.v_logpdf(cur.v, cur.sigma2)
    if accept(ratio, rng):
        cur.v, cur.lam, cur.ll = v, lam, ll
        acc[2] = True

    # discrepancy variance, random walk on log scale (Jacobian term included)
    ls = math.log(cur.sigma2) + prop.log_sigma2_scale * rng.standard_normal()
    s2 = math.exp(ls)
    if s2 > 0:
        ratio = (prob.v_logpdf(cur.v, s2) + prob.sigma_logpdf(s2) + ls
                 - prob.v_logpdf(cur.v, cur.sigma2) - prob.sigma_logpdf(cur.sigma2)
                 - math.log(cur.sigma2))
        if accept(ratio, rng):
            cur.sigma2 = s2
            acc[3] = True
    else:
        rng.random()
    return acc


def mh_step(state: CalibState, prob: CalibrationProblem, proposal: Proposal, rng):
    """One sweep over the four blocks; returns ``(new_state, accepted_flags)``."""
    for k in ("theta_scale", "eta_scale", "v_scale", "log_sigma2_scale"):
        if getattr(proposal, k) < 0:
            raise ValidationError("proposal scales must be non-negative")
    cur = _Cursor(prob, state)
    acc = _sweep(prob, cur, proposal, rng)
    return cur.state(), acc


@dataclass
class RunConfig:
    iterations: int = 100_000
    burn_in: int = 20_000
    thin: int = 10
    adapt: bool = True
    seed: int = 0
    carry_eta: bool = True

    def __post_init__(self):
        if self.iterations <= self.burn_in or self.burn_in < 0:
            raise ValidationError("iterations must exceed burn_in >= 0")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")


@dataclass
class Chain:
    theta: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    sigma2_d: np.ndarray
    log_post: np.ndarray
    iteration: np.ndarray
    acceptance: dict
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.theta.shape[0]

    def states(self):
        for k in range(len(self)):
            yield CalibState(self.theta[k], self.eta[k], float(self.v[k]), float(self.sigma2_d[k]))

    def columns(self) -> dict:
        cols = {"iteration": self.iteration}
        for k in range(self.theta.shape[1]):
            cols[f"theta_{k + 1}"] = self.theta[:, k]
        for k in range(self.eta.shape[1]):
            cols[f"eta_{k + 1}"] = self.eta[:, k]
        cols["v"] = self.v
        cols["sigma2_d"] = self.sigma2_d
        cols["log_post"] = self.log_post
        return cols

    @classmethod
    def from_columns(cls, cols: dict, acceptance=None, meta=None) -> "Chain":
        th = sorted((k for k in cols if k.startswith("theta_")), key=lambda s: int(s[6:]))
        et = sorted((k for k in cols if k.startswith("eta_")), key=lambda s: int(s[4:]))
        return cls(np.column_stack([cols[k] for k in th]),
                   np.column_stack([cols[k] for k in et]) if et else np.zeros((len(cols["v"]), 0)),
                   np.asarray(cols["v"]), np.asarray(cols["sigma2_d"]),
                   np.asarray(cols["log_post"]), np.asarray(cols["iteration"]).astype(int),
                   acceptance or {}, meta or {})


def initial_state(prob: CalibrationProblem, theta0=None) -> CalibState:
    """Start at ``theta0`` (default: design point whose emulated field best
    matches Z), nudged 1e-3 toward the box centre so the emulator variance
    is not degenerate; eta at its emulator mean, v = 0, sigma2 at the prior mode."""
    lo, hi = prob.priors.lower, prob.priors.upper
    if theta0 is None:
        inside = np.all((prob._pts >= lo) & (prob._pts <= hi), axis=1)
        cands = prob._pts[inside] if inside.any() else prob._pts
        scores = []
        for t in cands:
            mean, _ = prob.emulate(t)
            scores.append(np.sum((prob.mu + prob.K @ mean >= 0) == (prob.z == 1)))
        theta0 = cands[int(np.argmax(scores))]
    theta0 = np.clip(np.asarray(theta0, dtype=float), lo, hi)
    centre = 0.5 * (lo + hi)
    theta0 = theta0 + 1e-3 * np.sign(centre - theta0) * (hi - lo)
    mean, _ = prob.emulate(theta0)
    return CalibState(theta0, mean, 0.0, prob.priors.b_d / (prob.priors.a_d + 1))


def default_proposal(prob: CalibrationProblem, state: CalibState, carry_eta=True) -> Proposal:
    """Random-walk shapes from a Laplace approximation at ``state``."""
    mean, var = prob.emulate(state.theta)
    lam = prob.lam(state.eta, state.v)
    w = expit(lam) * expit(-lam) if prob.use_likelihood else np.zeros_like(lam)
    prec = (prob.K * w[:, None]).T @ prob.K + np.diag(1.0 / var)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    eta_chol = cholesky(cov + 1e-14 * np.eye(prob.j_y) * np.trace(cov), lower=True)
    width = prob.priors.upper - prob.priors.lower
    return Proposal(
        theta_scale=2.38 / math.sqrt(prob.d) * 0.05,
        eta_scale=2.38 / math.sqrt(prob.j_y),
        v_scale=0.5,
        log_sigma2_scale=1.0,
        theta_chol=np.diag(width),
        eta_chol=eta_chol,
        carry_eta=carry_eta,
    )


TARGETS = {"theta": 0.25, "eta": 0.25, "v": 0.44, "log_sigma2": 0.44}


def calibrate(prob: CalibrationProblem, cfg: RunConfig, state: CalibState | None = None,
              proposal: Proposal | None = None) -> Chain:
    """Run the block sampler.

    During burn-in each block's log scale follows a Robbins-Monro recursion
    toward its target acceptance (0.25 for vector blocks, 0.44 for scalars,
    or 0.44 for a 1-d theta); adaptation is frozen afterwards. Only
    post-burn-in draws, thinned, are stored.
    """
    rng = np.random.default_rng(cfg.seed)
    state = state or initial_state(prob)
    proposal = proposal or default_proposal(prob, state, cfg.carry_eta)
    targets = dict(TARGETS)
    if prob.d == 1:
        targets["theta"] = 0.44
    if prob.j_y == 1:
        targets["eta"] = 0.44
    tgt = np.array([targets[b] for b in BLOCKS])
    log_scales = np.log([proposal.theta_scale, proposal.eta_scale, proposal.v_scale,
                         proposal.log_sigma2_scale])
    cur = _Cursor(prob, state)
    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thin
    out_theta = np.empty((n_keep, prob.d))
    out_eta = np.empty((n_keep, prob.j_y))
    out_v = np.empty(n_keep)
    out_s2 = np.empty(n_keep)
    out_lp = np.empty(n_keep)
    out_it = np.empty(n_keep, dtype=int)
    acc_post = np.zeros(4)
    acc_burn = np.zeros(4)
    k = 0
    for it in range(cfg.iterations):
        acc = _sweep(prob, cur, proposal, rng)
        if it < cfg.burn_in:
            acc_burn += acc
            if cfg.adapt:
                gain = 1.0 / (1.0 + it) ** 0.6
                log_scales += gain * (acc - tgt)
                (proposal.theta_scale, proposal.eta_scale, proposal.v_scale,
                 proposal.log_sigma2_scale) = np.exp(log_scales)
            continue
        acc_post += acc
        j = it - cfg.burn_in
        if (j + 1) % cfg.thin == 0 and k < n_keep:
            out_theta[k], out_eta[k] = cur.theta, cur.eta
            out_v[k], out_s2[k] = cur.v, cur.sigma2
            out_lp[k] = cur.log_post(prob)
            out_it[k] = it + 1
            k += 1
    n_post = cfg.iterations - cfg.burn_in
    acceptance = {b: float(a / n_post) for b, a in zip(BLOCKS, acc_post)}
    meta = {"seed": cfg.seed, "iterations": cfg.iterations, "burn_in": cfg.burn_in,
            "thin": cfg.thin, "adapt": cfg.adapt, "proposal": proposal.as_dict(),
            "burn_in_acceptance": {b: float(a / max(cfg.burn_in, 1))
                                   for b, a in zip(BLOCKS, acc_burn)},
            "n_parameters": prob.j_y + prob.d + 2}
    return Chain(out_theta, out_eta, out_v, out_s2, out_lp, out_it, acceptance, meta)


def calibrate_many(prob: CalibrationProblem, cfg: RunConfig, n_chains: int,
                   threads: int = 1) -> list[Chain]:
    """Independent chains with seeds spawned from ``cfg.seed``."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(n_chains)
    cfgs = [replace(cfg, seed=int(s)) for s in seeds]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda c: calibrate(prob, c), cfgs))
    return [calibrate(prob, c) for c in cfgs]


# ------------------------------------------------------------------ diagnostics

def mcse_batch_means(series) -> dict:
    """Batch-means Monte Carlo standard error with batch size floor(sqrt(T))."""
    x = np.asarray(series, dtype=float)
    T = x.size
    if T < 100:
        raise ValidationError("batch means needs at least 100 draws")
    b = int(math.isqrt(T))
    a = T // b
    batches = x[: a * b].reshape(a, b).mean(axis=1)
    var_hat = b * np.sum((batches - batches.mean()) ** 2) / (a - 1)
    mcse = math.sqrt(var_hat / T)
    s2 = float(np.var(x, ddof=1))
    ess = float(T) if mcse == 0 else T * s2 / (T * mcse ** 2)
    return {"mean": float(x.mean()), "mcse": mcse, "ess": ess}


def chain_diagnostics(chains) -> dict:
    chains = [chains] if isinstance(chains, Chain) else list(chains)
    out = {"acceptance": [c.acceptance for c in chains], "coordinates": {}}
    cols = [c.columns() for c in chains]
    for name in cols[0]:
        if name == "iteration":
            continue
        series = np.concatenate([c[name] for c in cols])
        try:
            out["coordinates"][name] = mcse_batch_means(series)
        except ValidationError:
            out["coordinates"][name] = {"mean": float(series.mean()), "mcse": None, "ess": None}
    return out


def _reflected_kernel(nodes, x, h, lo, hi):
    def k(u):
        return np.exp(-0.5 * ((nodes[:, None] - u[None, :]) / h) ** 2)
    return (k(x) + k(2 * lo - x) + k(2 * hi - x)) / (h * math.sqrt(2 * math.pi))


def pairwise_density(chain, pair=(0, 1), grid: int = 50, bounds=None):
    """Product-Gaussian KDE of two theta coordinates on their bounded square.

    Boundary reflection keeps mass inside the square; the bandwidth is Scott's
    rule floored at one grid spacing. Returns ``(x_nodes, y_nodes, density)``
    with ``density[ix, iy]`` normalized to trapezoid integral 1.
    """
    th = chain.theta if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if th.shape[0] == 0:
        raise ValidationError("empty chain")
    if grid < 16:
        raise ValidationError("density grid needs at least 16 points per axis")
    i, j = pair
    bounds = bounds or ((0.0, 1.0), (0.0, 1.0))
    (xl, xh), (yl, yh) = bounds
    xs = np.linspace(xl, xh, grid)
    ys = np.linspace(yl, yh, grid)
    x, y = th[:, i], th[:, j]
    T = th.shape[0]
    hx = max(np.std(x) * T ** (-1 / 6), xs[1] - xs[0])
    hy = max(np.std(y) * T ** (-1 / 6), ys[1] - ys[0])
    dens = _reflected_kernel(xs, x, hx, xl, xh) @ _reflected_kernel(ys, y, hy, yl, yh).T / T
    total = trapezoid(trapezoid(dens, ys, axis=1), xs)
    return xs, ys, dens / total
