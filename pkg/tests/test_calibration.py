import math

import numpy as np
import pytest
from scipy import stats

from binarycal import calibration as cal
from binarycal.core import ValidationError


def test_observation_log_lik_examples():
    z = np.array([1, 0, 1, 1])
    assert cal.observation_log_lik(z, np.zeros(4)) == pytest.approx(-4 * math.log(2), rel=1e-15)
    assert cal.observation_log_lik(np.ones(5, int), np.full(5, 40.0)) > -1e-15
    lam = np.array([1.0, -1.0, 0.0])
    hand = (1 * 1.0 - math.log(1 + math.e)) + (0 - math.log(1 + math.exp(-1))) + (1 * 0 - math.log(2))
    assert cal.observation_log_lik(np.array([1, 0, 1]), lam) == pytest.approx(hand, abs=1e-14)
    assert np.isfinite(cal.observation_log_lik(np.array([0, 1]), np.array([800.0, -800.0])))
    with pytest.raises(ValidationError):
        cal.observation_log_lik(z, np.zeros(3))


def test_observation_log_lik_brute_force_two_by_two():
    lam = np.array([0.3, -2.0, 1.7, 0.0])
    for code in range(16):
        z = np.array([(code >> k) & 1 for k in range(4)])
        ref = sum(math.log(1 / (1 + math.exp(-l)) if zi else 1 - 1 / (1 + math.exp(-l)))
                  for zi, l in zip(z, lam))
        assert cal.observation_log_lik(z, lam) == pytest.approx(ref, abs=1e-12)


def test_prior_config_validation():
    with pytest.raises(ValidationError):
        cal.PriorConfig(((0.5, 0.5),))
    with pytest.raises(ValidationError):
        cal.PriorConfig(((0.0, 1.2),))
    with pytest.raises(ValidationError):
        cal.PriorConfig(((0.0, 1.0),), a_d=0)


def _state(prob, theta=(0.4, 0.6), v=0.0, s2=1.0):
    mean, _ = prob.emulate(np.array(theta))
    return cal.CalibState(np.array(theta), mean, v, s2)


def test_log_posterior_support(small_pipeline):
    prob = small_pipeline["prob"]
    assert prob.log_posterior(_state(prob, (1.01, 0.5))) == -np.inf
    s = _state(prob)
    assert prob.log_posterior(cal.CalibState(s.theta, s.eta, 0.0, 0.0)) == -np.inf
    assert np.isfinite(prob.log_posterior(s))


def test_log_posterior_terms(small_pipeline):
    prob = small_pipeline["prob"]
    a, b = prob.priors.a_d, prob.priors.b_d
    mode = b / (a + 1)
    s = _state(prob, s2=mode)
    _, var = prob.emulate(s.theta)
    ig = a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(mode) - b / mode
    gauss = -np.sum(np.log(np.sqrt(var) * math.sqrt(2 * math.pi)))
    v_term = -0.5 * math.log(2 * math.pi * mode)
    ll = cal.observation_log_lik(prob.z, prob.lam(s.eta, 0.0))
    assert prob.log_posterior(s) == pytest.approx(ll + gauss + v_term + ig, abs=1e-9)
    wrapper = cal.log_posterior(s, small_pipeline["obs"], small_pipeline["lpca"],
                                small_pipeline["emu"].gps, small_pipeline["basis"], prob.priors)
    assert wrapper == prob.log_posterior(s)


def test_log_posterior_continuity(small_pipeline, rng):
    prob = small_pipeline["prob"]
    h = 1e-7
    for _ in range(100):
        th = rng.uniform(0.01, 0.99, 2)
        s = _state(prob, th, v=0.3, s2=0.8)
        moved = cal.CalibState(th + h, s.eta, s.v, s.sigma2_d)
        assert abs(prob.log_posterior(moved) - prob.log_posterior(s)) <= 1e3 * h


def test_posterior_bounded_above(small_pipeline):
    # likelihood <= 0 and each Gaussian/IG term is at most its value at the mode
    prob = small_pipeline["prob"]
    a, b = prob.priors.a_d, prob.priors.b_d
    m = b / (a + 1)
    ig_max = a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(m) - b / m
    for t1 in np.linspace(0, 1, 15):
        for t2 in np.linspace(0, 1, 15):
            _, var = prob.emulate(np.array([t1, t2]))
            eta_max = -0.5 * np.sum(np.log(2 * math.pi * var))
            for v in (-2.0, 0.0, 2.0):
                for s2 in (1e-3, 1.0, 100.0):
                    lp = prob.log_posterior(_state(prob, (t1, t2), v=v, s2=s2))
                    bound = eta_max - 0.5 * math.log(2 * math.pi * s2) + ig_max
                    assert np.isfinite(lp) and lp <= bound + 1e-9


def test_zero_scale_proposal_keeps_state(small_pipeline, rng):
    prob = small_pipeline["prob"]
    s = _state(prob, v=0.2, s2=0.7)
    prop = cal.default_proposal(prob, s)
    prop.theta_scale = prop.eta_scale = prop.v_scale = prop.log_sigma2_scale = 0.0
    new, acc = cal.mh_step(s, prob, prop, rng)
    assert acc.all()
    np.testing.assert_array_equal(new.theta, s.theta)
    np.testing.assert_allclose(new.eta, s.eta, rtol=1e-15)
    assert (new.v, new.sigma2_d) == (s.v, s.sigma2_d)
    prop.v_scale = -1.0
    with pytest.raises(ValidationError):
        cal.mh_step(s, prob, prop, rng)


def test_two_state_detailed_balance():
    # flip proposal between two states with target (0.3, 0.7): P(1 -> 0) = 3/7, P(0 -> 1) = 1
    rng = np.random.default_rng(5)
    pi = np.array([0.3, 0.7])
    x, moves = 1, {(0, 1): 0, (1, 0): 0, (0, 0): 0, (1, 1): 0}
    for _ in range(200_000):
        y = 1 - x
        nxt = y if cal.accept(math.log(pi[y] / pi[x]), rng) else x
        moves[(x, nxt)] += 1
        x = nxt
    from_1 = moves[(1, 0)] + moves[(1, 1)]
    p10 = moves[(1, 0)] / from_1
    assert abs(p10 - 3 / 7) < 4 * math.sqrt(p10 * (1 - p10) / from_1)
    assert moves[(0, 0)] == 0
    # flow balance pi_0 P01 = pi_1 P10 shows up as equal move counts
    assert abs(moves[(0, 1)] - moves[(1, 0)]) <= 1


def test_chain_reproducible(small_pipeline):
    prob = small_pipeline["prob"]
    cfg = cal.RunConfig(iterations=600, burn_in=200, thin=2, seed=9)
    a, b = cal.calibrate(prob, cfg), cal.calibrate(prob, cfg)
    for k, col in a.columns().items():
        np.testing.assert_array_equal(col, b.columns()[k])
    assert len(a) == 200


def test_run_config_validation():
    with pytest.raises(ValidationError):
        cal.RunConfig(iterations=10, burn_in=10)
    with pytest.raises(ValidationError):
        cal.RunConfig(iterations=10, burn_in=0, thin=0)


def test_many_chains_distinct_and_reproducible(small_pipeline):
    prob = small_pipeline["prob"]
    cfg = cal.RunConfig(iterations=300, burn_in=100, thin=1, seed=1)
    a = cal.calibrate_many(prob, cfg, 4, threads=2)
    b = cal.calibrate_many(prob, cfg, 4, threads=1)
    assert len({c.meta["seed"] for c in a}) == 4
    assert len({c.theta[-1].tobytes() for c in a}) == 4
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.theta, y.theta)


@pytest.mark.slow
def test_adapted_acceptance_and_eta_prior(small_pipeline):
    prob = small_pipeline["prob"]
    flat = cal.CalibrationProblem(prob.z, small_pipeline["lpca"], small_pipeline["emu"].gps,
                                  small_pipeline["basis"], prob.priors, use_likelihood=False)
    chain = cal.calibrate(flat, cal.RunConfig(iterations=100_000, burn_in=10_000, thin=10, seed=2))
    for b, rate in chain.acceptance.items():
        assert 0.1 <= rate <= 0.6, b
    # with no data, eta given theta is the emulator's predictive normal
    z = np.array([(s.eta - m) / np.sqrt(v) for s in chain.states()
                  for m, v in [flat.emulate(s.theta)]])
    ess = min(cal.mcse_batch_means(z[:, k])["ess"] for k in range(z.shape[1]))
    assert np.all(np.abs(z.mean(axis=0)) < 5 / math.sqrt(ess))
    assert np.all(np.abs(z.var(axis=0) - 1) < 0.15)

    real = cal.calibrate(prob, cal.RunConfig(iterations=20_000, burn_in=5_000, thin=5, seed=2))
    for b, rate in real.acceptance.items():
        assert 0.1 <= rate <= 0.6, b


def test_mcse_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10_000)
    assert cal.mcse_batch_means(x)["mcse"] == pytest.approx(0.01, rel=0.3)
    c = cal.mcse_batch_means(np.full(500, 2.5))
    assert c["mcse"] == 0 and c["mean"] == 2.5
    with pytest.raises(ValidationError):
        cal.mcse_batch_means(np.zeros(99))


def test_mcse_ar1():
    rho, T = 0.9, 100_000
    rng = np.random.default_rng(3)
    e = rng.standard_normal(T) * math.sqrt(1 - rho ** 2)
    x = np.empty(T)
    x[0] = rng.standard_normal()
    for t in range(1, T):
        x[t] = rho * x[t - 1] + e[t]
    truth = math.sqrt((1 + rho) / (1 - rho)) / math.sqrt(T)
    out = cal.mcse_batch_means(x)
    assert out["mcse"] == pytest.approx(truth, rel=0.3)
    assert out["ess"] == pytest.approx(T * (1 - rho) / (1 + rho), rel=0.6)


def test_density_point_mass():
    xs, ys, d = cal.pairwise_density(np.tile([[0.31, 0.72]], (200, 1)), grid=21)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    assert abs(xs[i] - 0.31) <= 0.05 and abs(ys[j] - 0.72) <= 0.05


def test_density_uniform_and_normalized():
    th = np.random.default_rng(4).random((100_000, 2))
    xs, ys, d = cal.pairwise_density(th, grid=32)
    interior = d[2:-2, 2:-2]
    assert interior.max() / interior.min() < 2
    from scipy.integrate import trapezoid
    assert trapezoid(trapezoid(d, ys, axis=1), xs) == pytest.approx(1.0, abs=1e-6)


def test_density_errors():
    with pytest.raises(ValidationError):
        cal.pairwise_density(np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        cal.pairwise_density(np.zeros((5, 2)), grid=8)


def test_chain_columns_round_trip(small_pipeline):
    chain = cal.calibrate(small_pipeline["prob"], cal.RunConfig(iterations=300, burn_in=100, thin=4))
    cols = chain.columns()
    assert list(cols)[:3] == ["iteration", "theta_1", "theta_2"]
    assert list(cols)[-3:] == ["v", "sigma2_d", "log_post"]
    back = cal.Chain.from_columns(cols)
    np.testing.assert_array_equal(back.eta, chain.eta)
    diag = cal.chain_diagnostics([chain, back])
    assert set(diag["coordinates"]) >= {"theta_1", "theta_2", "v", "sigma2_d"}


def test_prior_run_is_uniform_small(small_pipeline):
    prob = small_pipeline["prob"]
    flat = cal.CalibrationProblem(prob.z, small_pipeline["lpca"], small_pipeline["emu"].gps,
                                  small_pipeline["basis"], prob.priors, use_likelihood=False)
    chain = cal.calibrate(flat, cal.RunConfig(iterations=30_000, burn_in=5_000, thin=25, seed=8))
    for k in range(2):
        assert stats.kstest(chain.theta[:, k], "uniform").pvalue > 0.001
