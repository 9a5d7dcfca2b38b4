import json

import numpy as np
import pytest
from scipy import stats

from etasgp.catalog import Catalog, DomainWindow
from etasgp.errors import EmptyCatalogError
from etasgp.gaussian_process import GpFunctionValues, GpHyperParams, cross_covariance, sample_prior
from etasgp.gibbs import (BranchingData, GibbsConfig, GibbsSampler, GibbsState, PosteriorChain,
                          Priors, gaussian_posterior, log_likelihood_theta, log_target_nu,
                          mh_hyperparameters, mh_triggering, run_gibbs, sample_branching, sample_f,
                          sample_lambda_bar, sample_latent_pi, sample_pg_variables)
from etasgp.simulator import SimConfig, simulate_catalog
from etasgp.triggering import (CASE1_THETA, PARAM_NAMES, ConstantBackground, TriggeringParams,
                               branching_probabilities, case1_background,
                               complete_data_log_likelihood, productivity,
                               spatial_kernel)

import geweke

W = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 100.0), 3.0)
NU = GpHyperParams(1.5, 0.8, 0.6)


def small_catalog(n=25, seed=0):
    rng = np.random.default_rng(seed)
    return Catalog(np.sort(rng.uniform(0, 100, n)), rng.uniform(0, 5, (n, 2)),
                   3.0 + rng.exponential(0.43, n), W)


def fast_config(**kw):
    base = dict(n_samples=20, burn_in=10, seed=3, probe_grid=(4, 4), probe_thin=5,
                nu_proposal_sd=0.1, theta_proposal_sd=0.05)
    return GibbsConfig(**{**base, **kw})


# ---------------------------------------------------------------- branching

def test_branching_first_event_and_no_productivity():
    cat = small_catalog()
    rng = np.random.default_rng(0)
    mu = np.full(len(cat), 0.01)
    for _ in range(20):
        z = sample_branching(cat, mu, CASE1_THETA, rng)
        assert z[0] == 0
        assert np.all(z <= np.arange(len(cat)))
    assert np.all(sample_branching(cat, mu, CASE1_THETA.replace(K0=0.0), rng) == 0)


def test_branching_frequencies_match_conditionals():
    w = DomainWindow((0.0, 2.0), (0.0, 2.0), (0.0, 10.0), 3.0)
    cat = Catalog([1.0, 1.2, 1.5], [[1.0, 1.0], [1.05, 1.0], [1.0, 1.1]], [4.5, 3.8, 3.2], w)
    th = TriggeringParams(K0=0.05, c=0.05, p=1.2, alpha=1.0, d=0.02, gamma=0.2, q=2.0)
    mu = ConstantBackground(0.3)
    rng = np.random.default_rng(1)
    draws = np.array([sample_branching(cat, mu(cat.xy), th, rng) for _ in range(100_000)])
    for i in range(3):
        p = branching_probabilities(i, cat, mu, th)
        counts = np.bincount(draws[:, i], minlength=i + 1)
        sd = np.sqrt(len(draws) * p * (1 - p))
        assert np.all(np.abs(counts - len(draws) * p) <= 4 * sd + 1e-12)


# ---------------------------------------------------------------- latent process

def test_latent_pi_empty_for_large_f():
    f = GpFunctionValues(np.array([[2.5, 2.5]]), np.array([60.0]))
    nu = GpHyperParams(3600.0, 100.0, 100.0)
    xy, f_pi = sample_latent_pi(2.0, f, nu, W, np.random.default_rng(0), jitter=1e-12)
    assert len(xy) == 0 and len(f_pi) == 0


def test_latent_pi_counts_are_poisson():
    w = DomainWindow((0.0, 1.0), (0.0, 1.0), (0.0, 10.0), 0.0)
    f = GpFunctionValues(np.array([[0.5, 0.5]]), np.array([0.0]))
    tiny = GpHyperParams(1e-12, 1.0, 1.0)
    rng = np.random.default_rng(2)
    n = np.array([len(sample_latent_pi(1.0, f, tiny, w, rng)[0]) for _ in range(10_000)])
    assert abs(n[:200].mean() - 5.0) < 4 * np.sqrt(5.0 / 200)
    obs = np.bincount(n, minlength=16)[:16].astype(float)
    obs[15] += np.sum(n > 15)
    exp = stats.poisson.pmf(np.arange(16), 5.0) * len(n)
    exp[15] += stats.poisson.sf(15, 5.0) * len(n)
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_latent_pi_values_follow_gp_conditional():
    f = GpFunctionValues(np.array([[1.0, 1.0]]), np.array([0.7]))
    rng = np.random.default_rng(3)
    xy, f_pi = sample_latent_pi(0.5, f, NU, W, rng)
    assert np.all(W.contains_xy(xy))
    assert len(xy) == len(f_pi)


# ---------------------------------------------------------------- omega and lambda_bar

def test_pg_variables_zero_pattern_and_mean():
    n, n_pi = 6, 4
    z = np.array([0, 1, 0, 2, 0, 0])
    state = GibbsState(z=z, pi_points=np.zeros((n_pi, 2)), omega=np.zeros(n + n_pi),
                       lambda_bar=1.0, f=GpFunctionValues(np.zeros((n + n_pi, 2)), np.zeros(n + n_pi)),
                       nu=NU, theta=CASE1_THETA)
    rng = np.random.default_rng(4)
    draws = np.array([sample_pg_variables(state, rng) for _ in range(20_000)])
    assert np.all(draws[:, [1, 3]] == 0)
    active = draws[:, [0, 2, 4, 5, 6, 7, 8, 9]]
    assert np.all(active > 0)
    assert abs(active.mean() - 0.25) < 4 * active.std() / np.sqrt(active.size)


@pytest.mark.parametrize("n,a0,b0,vol", [(0, 1.0, 0.0, 10.0), (50, 1.0, 1.0, 100.0)])
def test_lambda_bar_gamma_moments(n, a0, b0, vol):
    w = DomainWindow((0.0, 1.0), (0.0, 1.0), (0.0, vol), 0.0)
    rng = np.random.default_rng(5)
    x = np.array([sample_lambda_bar(n, w, Priors((a0, b0)), rng) for _ in range(20_000)])
    mean, var = (n + a0) / (vol + b0), (n + a0) / (vol + b0) ** 2
    assert abs(x.mean() - mean) < 4 * np.sqrt(var / len(x))
    assert abs(x.var() - var) < 4 * np.std((x - mean) ** 2) / np.sqrt(len(x))
    if n == 0:
        assert mean == pytest.approx(0.1)


# ---------------------------------------------------------------- f

def test_f_one_point_posterior():
    mean, cov = gaussian_posterior(np.array([[1.0]]), [1.0], np.array([0.5]))
    assert mean[0] == pytest.approx(0.25, abs=1e-12)
    assert cov[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_f_three_point_posterior_matches_dense_oracle():
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 2, (3, 2))
    K = cross_covariance(x, x, NU)
    omega = np.array([0.3, 0.0, 1.7])
    u = np.array([0.5, 0.0, -0.5])
    P = np.diag(omega) + np.linalg.inv(K)
    ref_cov = np.linalg.inv(P)
    ref_mean = ref_cov @ u
    mean, cov = gaussian_posterior(K, omega, u)
    np.testing.assert_allclose(mean, ref_mean, atol=1e-8)
    np.testing.assert_allclose(cov, ref_cov, atol=1e-8)
    prior_mean, prior_cov = gaussian_posterior(K, np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(prior_mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(prior_cov, K, atol=1e-8)


def test_sample_f_moments():
    x = np.array([[0.0, 0.0], [0.5, 0.2], [3.0, 3.0]])
    state = GibbsState(z=np.array([0, 1]), pi_points=x[2:], omega=np.array([0.8, 0.0, 0.4]),
                       lambda_bar=1.0, f=GpFunctionValues(x, np.zeros(3)), nu=NU, theta=CASE1_THETA)
    cat = Catalog([1.0, 2.0], x[:2], [3.5, 3.2], W)
    rng = np.random.default_rng(7)
    draws = np.array([sample_f(state, cat, rng, jitter=1e-10) for _ in range(20_000)])
    mean, cov = gaussian_posterior(cross_covariance(x, x, NU), state.omega, np.array([0.5, 0.0, -0.5]))
    se = np.sqrt(np.diag(cov) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05)


# ---------------------------------------------------------------- nu

def test_log_target_nu_matches_dense_oracle():
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 5, (12, 2))
    f = GpFunctionValues(x, rng.standard_normal(12))
    pri = Priors((1.0, 1.0), (0.2, 2.5, 2.5))
    val, _ = log_target_nu(f, NU, pri, jitter=1e-8)
    K = cross_covariance(x, x, NU) + 1e-8 * NU.nu0 * np.eye(12)
    rates = np.array([0.2, 2.5, 2.5])
    ref = (-0.5 * f.values @ np.linalg.solve(K, f.values) - 0.5 * np.linalg.slogdet(K)[1]
           + np.sum(np.log(rates) - rates * NU.as_array()))
    assert val == pytest.approx(ref, abs=1e-8)


def _state_with_f(x, values, nu=NU, theta=CASE1_THETA):
    n = len(x)
    return GibbsState(z=np.zeros(n, dtype=np.int64), pi_points=np.empty((0, 2)), omega=np.zeros(n),
                      lambda_bar=1.0, f=GpFunctionValues(x, values), nu=nu, theta=theta)


def test_mh_steps_with_zero_proposal_always_accept():
    rng = np.random.default_rng(9)
    cat = small_catalog()
    state = _state_with_f(cat.xy, rng.standard_normal(len(cat)))
    pri = Priors((1.0, 1.0))
    for _ in range(5):
        nu, ok, _ = mh_hyperparameters(state, pri, 0.0, rng)
        assert ok and nu == state.nu
    theta, n_acc = mh_triggering(state, cat, pri, 0.0, 7, rng)
    assert n_acc == 7
    np.testing.assert_allclose(theta.as_array(), state.theta.as_array(), rtol=1e-14)


def test_nu_posterior_is_calibrated():
    """With nu drawn from its prior and f from the GP, central 90% intervals cover nu."""
    pri = Priors((1.0, 1.0), (0.2, 2.5, 2.5))
    rng = np.random.default_rng(10)
    reps, covered = 40, np.zeros(3, dtype=int)
    for _ in range(reps):
        nu = GpHyperParams.from_array(rng.exponential(1 / np.array([0.2, 2.5, 2.5])))
        x = rng.uniform(0, 5, (100, 2))
        state = _state_with_f(x, sample_prior(x, nu, rng, 1e-6).values, nu)
        trace, factor = [], None
        for _ in range(1500):
            state.nu, _, factor = mh_hyperparameters(state, pri, 0.4, rng, 1e-6, factor)
            trace.append(state.nu.as_array())
        lo, hi = np.quantile(np.array(trace[300:]), [0.05, 0.95], axis=0)
        covered += (lo <= nu.as_array()) & (nu.as_array() <= hi)
    # binomial(40, 0.9) has mean 36 and sd 1.9
    assert np.all(covered >= 29), covered


# ---------------------------------------------------------------- theta

def brute_force_theta_likelihood(theta, cat, z):
    val = 0.0
    for i, zi in enumerate(z):
        if zi > 0:
            j = zi - 1
            val += np.log(productivity(cat.m[j], theta, cat.m0)
                          * (cat.t[i] - cat.t[j] + theta.c) ** -theta.p
                          * spatial_kernel(cat.xy[i] - cat.xy[j], cat.m[j], theta, cat.m0))
    for j in range(len(cat)):
        s = cat.window.t_range[1] - cat.t[j]
        c, p = theta.c, theta.p
        val -= productivity(cat.m[j], theta, cat.m0) * ((s + c) ** (1 - p) - c ** (1 - p)) / (1 - p)
    return val


def test_theta_likelihood_matches_term_by_term_oracle():
    cat = small_catalog(12, seed=11)
    rng = np.random.default_rng(11)
    z = np.array([rng.integers(0, i + 1) for i in range(len(cat))])
    th = CASE1_THETA.replace(d=0.5)
    got = log_likelihood_theta(th, cat, z)
    assert got == pytest.approx(brute_force_theta_likelihood(th, cat, z), rel=1e-10, abs=1e-10)
    np.testing.assert_allclose(log_likelihood_theta(th, cat, z, BranchingData(cat).assigned(z)), got,
                               rtol=1e-14)
    # the complete-data likelihood splits into a background part and this one
    mu = ConstantBackground(0.01)
    bg = np.sum(z == 0) * np.log(0.01) - 0.01 * W.area * W.duration
    assert complete_data_log_likelihood(cat, z, mu, th) == pytest.approx(bg + got, rel=1e-10)


# 5-95% posterior band of a full GP-ETAS fit to a 5000-day Case-1 catalog
REFERENCE_BAND = {"K0": (0.0164, 0.0203), "c": (0.0056, 0.0085), "p": (1.19, 1.24),
                  "alpha": (1.595, 1.734), "d": (0.014, 0.022), "gamma": (0.17, 0.21),
                  "q": (1.93, 2.23)}


def test_theta_recovery_with_true_branching():
    w = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 5000.0), 3.36)
    cat = simulate_catalog(SimConfig(w, CASE1_THETA, background=case1_background(), seed=14))
    pri = Priors((1.0, 1.0))
    state = _state_with_f(cat.xy, np.zeros(len(cat)), theta=CASE1_THETA.replace(K0=0.03, p=1.4))
    rng = np.random.default_rng(14)
    assigned = BranchingData(cat).assigned(cat.z)
    trace = []
    for _ in range(3000):
        state.theta, _ = mh_triggering(state, cat, pri, 0.05, 10, rng, assigned)
        trace.append(state.theta.as_array())
    trace = np.array(trace[1000:])
    lo, med, hi = np.quantile(trace, [0.005, 0.5, 0.995], axis=0)
    truth = CASE1_THETA.as_array()
    bad = [n for k, n in enumerate(PARAM_NAMES) if not lo[k] <= truth[k] <= hi[k]]
    assert not bad, (bad, lo, hi)
    off = [n for k, n in enumerate(PARAM_NAMES)
           if not REFERENCE_BAND[n][0] <= med[k] <= REFERENCE_BAND[n][1]]
    assert not off, (off, med)


# ---------------------------------------------------------------- chain mechanics

def test_empty_catalog_needs_explicit_state():
    with pytest.raises(EmptyCatalogError):
        GibbsSampler(Catalog.empty(W), Priors((1.0, 1.0)), fast_config())
    state = GibbsState(z=np.zeros(0, dtype=np.int64), pi_points=np.empty((0, 2)), omega=np.zeros(0),
                       lambda_bar=0.001, f=GpFunctionValues(np.empty((0, 2)), np.empty(0)),
                       nu=NU, theta=CASE1_THETA)
    sampler = GibbsSampler(Catalog.empty(W), Priors((1.0, 1.0)), fast_config(), state=state)
    for _ in range(5):
        sampler.sweep()


def test_zero_samples_gives_empty_chain():
    chain = run_gibbs(small_catalog(), config=fast_config(n_samples=0, burn_in=3))
    assert len(chain) == 0 and chain.summary() == {}


def test_sweep_invariants():
    cat = small_catalog()
    sampler = GibbsSampler(cat, config=fast_config())
    for _ in range(15):
        s = sampler.sweep()
        assert len(s.f) == len(cat) + len(s.pi_points)
        assert np.all(s.mu_at_events() <= s.lambda_bar)
        assert np.all(s.omega[: len(cat)][s.z > 0] == 0)
        assert np.all(s.omega[: len(cat)][s.z == 0] > 0) and np.all(s.omega[len(cat):] > 0)
        assert np.all(s.z <= np.arange(len(cat)))
        assert s.lambda_bar > 0


def test_fixed_seed_is_bit_identical(tmp_path):
    cat = small_catalog()
    paths = []
    for k in range(2):
        chain = run_gibbs(cat, config=fast_config())
        paths.append(tmp_path / f"c{k}.jsonl")
        chain.write_jsonl(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    back = PosteriorChain.read_jsonl(paths[0])
    assert len(back) == 20 and len(back.probe_samples()) == 4
    assert back.summary() == chain.summary()


def test_checkpoint_resume_matches_uninterrupted():
    cat = small_catalog()
    full = GibbsSampler(cat, config=fast_config()).run()
    first = GibbsSampler(cat, config=fast_config())
    first.run(stop_at=17)
    d = json.loads(json.dumps(first.checkpoint_dict()))
    resumed = GibbsSampler.from_checkpoint(cat, d, fast_config()).run()
    a = [json.dumps(s.to_dict(), sort_keys=True) for s in full.samples]
    b = [json.dumps(s.to_dict(), sort_keys=True) for s in resumed.samples]
    assert a == b


def test_state_json_round_trip():
    sampler = GibbsSampler(small_catalog(), config=fast_config())
    s = sampler.sweep()
    back = GibbsState.from_json(s.to_json())
    assert back.to_dict() == s.to_dict()


# ---------------------------------------------------------------- joint distribution

@pytest.mark.slow
def test_geweke_joint_distribution():
    forward = geweke.marginal_conditional(20_000, seed=1)
    chain = geweke.successive_conditional(40_000, seed=7)
    z = geweke.z_scores(forward, chain)
    bad = {k: v for k, v in z.items() if abs(v) >= 4.0}
    assert not bad, z
