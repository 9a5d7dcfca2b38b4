import numpy as np
import pytest
from scipy import stats

from etasgp.catalog import Catalog, DomainWindow
from etasgp.errors import ConfigError, SupercriticalError
from etasgp.gaussian_process import GpHyperParams
from etasgp.simulator import (LN10, SimConfig, branching_ratio, sample_offspring_offsets,
                              simulate_background, simulate_catalog, simulate_offspring)
from etasgp.triggering import (CASE1_THETA, ConstantBackground, integrated_triggering,
                               case1_background, sigma_m)

W = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 1000.0), 3.36)
REPS = 200


def _counts(cfg, reps=REPS):
    rng = np.random.default_rng(cfg.seed)
    return np.array([len(simulate_background(cfg, rng)) for _ in range(reps)])


def test_constant_background_counts():
    cfg = SimConfig(W, CASE1_THETA, background=ConstantBackground(0.004), lambda_bar=0.01)
    n = _counts(cfg)
    mean = 0.004 * W.area * W.duration
    assert abs(n.mean() - mean) < 4 * np.sqrt(mean / REPS)


def test_piecewise_background_counts():
    cfg = SimConfig(W, CASE1_THETA, background=case1_background(), seed=1)
    n = _counts(cfg)
    mean = case1_background().integral(W) * W.duration  # 63.25 per 1000 days
    assert mean == pytest.approx(63.25)
    assert abs(n.mean() - mean) < 4 * np.sqrt(mean / REPS)


def test_gp_background_counts():
    w = DomainWindow((0.0, 1.0), (0.0, 1.0), (0.0, 100.0), 0.0)
    cfg = SimConfig(w, CASE1_THETA, lambda_bar=0.5, nu=GpHyperParams(2.0, 0.3, 0.3), seed=2)
    n = _counts(cfg)
    # E sigmoid(f) = 1/2 for a zero-mean GP
    assert abs(n.mean() - 0.25 * 100.0) < 4 * n.std(ddof=1) / np.sqrt(REPS)


def test_background_labels_and_marks():
    cfg = SimConfig(W, CASE1_THETA, background=case1_background(), seed=3)
    cat = simulate_background(cfg, np.random.default_rng(3))
    assert np.all(cat.z == 0)
    assert np.all(np.diff(cat.t) >= 0)
    marks = np.concatenate([simulate_background(cfg, np.random.default_rng(k)).m for k in range(20)])
    assert stats.kstest(marks - W.m0, "expon", args=(0, 1 / LN10)).pvalue > 0.01


def test_gp_background_returns_f():
    w = DomainWindow((0.0, 1.0), (0.0, 1.0), (0.0, 10.0), 0.0)
    cfg = SimConfig(w, CASE1_THETA, lambda_bar=3.0, nu=GpHyperParams(1.0, 0.5, 0.5))
    cat, (xy, f) = simulate_background(cfg, np.random.default_rng(0), return_f=True)
    assert len(xy) == len(f) >= len(cat)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(W, CASE1_THETA)
    with pytest.raises(ConfigError):
        SimConfig(W, CASE1_THETA, background=case1_background(), nu=GpHyperParams(1, 1, 1))
    with pytest.raises(ConfigError):
        SimConfig(W, CASE1_THETA, background=case1_background(), lambda_bar=0.001)
    with pytest.raises(ConfigError):
        SimConfig(W, CASE1_THETA, nu=GpHyperParams(1, 1, 1))
    with pytest.raises(ConfigError):
        SimConfig(W, CASE1_THETA, background=case1_background(), offspring_method="magic")
    assert SimConfig(W, CASE1_THETA, background=case1_background()).lambda_bar == 0.005


def test_offspring_offsets_radial_law():
    rng = np.random.default_rng(4)
    m = np.full(20000, 4.0)
    d = sample_offspring_offsets(m, CASE1_THETA, 3.36, rng)
    r2 = np.sum(d * d, axis=1)
    s = sigma_m(4.0, CASE1_THETA, 3.36)
    cdf = lambda x: 1.0 - (1.0 + x / s) ** -(CASE1_THETA.q - 1.0)  # noqa: E731
    assert stats.kstest(r2, cdf).pvalue > 0.01
    angle = np.arctan2(d[:, 1], d[:, 0])
    assert stats.kstest(angle, "uniform", args=(-np.pi, 2 * np.pi)).pvalue > 0.01


def _first_generation(cfg, parents, reps, seed):
    rng = np.random.default_rng(seed)
    counts, delays = [], []
    for _ in range(reps):
        cat = simulate_offspring(parents, cfg, rng)
        direct = cat.z > 0
        first = direct & (cat.z[np.where(direct, cat.z - 1, 0)] == 0)
        counts.append(first.sum())
        delays.append(cat.t[first] - cat.t[cat.z[first] - 1])
    return np.array(counts), np.concatenate(delays)


@pytest.mark.parametrize("method", ["inversion", "thinning"])
def test_direct_offspring_counts(method):
    big = DomainWindow((-500.0, 500.0), (-500.0, 500.0), (0.0, 100.0), 3.0)
    th = CASE1_THETA.replace(K0=0.05, alpha=0.5)
    parents = Catalog([1.0, 30.0], [[0.0, 0.0], [1.0, 1.0]], [4.0, 3.5], big,
                      z=np.zeros(2, dtype=np.int64))
    cfg = SimConfig(big, th, lambda_bar=1.0, nu=GpHyperParams(1, 1, 1), offspring_method=method)
    counts, delays = _first_generation(cfg, parents, 400, 5)
    expected = float(np.sum(integrated_triggering(parents.t, parents.m, 100.0, th, 3.0)))
    assert abs(counts.mean() - expected) < 4 * np.sqrt(expected / 400)
    assert np.all(delays > 0)


def test_inversion_and_thinning_delays_agree():
    big = DomainWindow((-500.0, 500.0), (-500.0, 500.0), (0.0, 50.0), 3.0)
    th = CASE1_THETA.replace(K0=0.02, alpha=1.5, c=0.1)
    parents = Catalog([0.0], [[0.0, 0.0]], [7.0], big, z=np.zeros(1, dtype=np.int64))
    res = []
    for method in ("inversion", "thinning"):
        cfg = SimConfig(big, th, lambda_bar=1.0, nu=GpHyperParams(1, 1, 1), offspring_method=method)
        res.append(_first_generation(cfg, parents, 300, 6)[1])
    assert stats.ks_2samp(*res).pvalue > 0.01


def test_catalog_structure_and_determinism():
    cfg = SimConfig(W, CASE1_THETA, background=case1_background(), seed=7)
    a, b = simulate_catalog(cfg), simulate_catalog(cfg)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.xy, b.xy) and np.array_equal(a.z, b.z)
    assert np.all(np.diff(a.t) >= 0)
    kids = np.flatnonzero(a.z > 0)
    assert np.all(a.z[kids] - 1 < kids)
    assert np.all(a.t[a.z[kids] - 1] <= a.t[kids])
    assert np.all(a.m >= W.m0)


def test_no_triggering_without_productivity():
    cfg = SimConfig(W, CASE1_THETA.replace(K0=0.0), background=case1_background(), seed=8)
    assert np.all(simulate_catalog(cfg).z == 0)


def test_supercritical_guard():
    th = CASE1_THETA.replace(K0=5.0)
    cfg = SimConfig(W, th, background=case1_background(), seed=9, max_events=5000)
    with pytest.raises(SupercriticalError):
        simulate_catalog(cfg)


def test_branching_ratio():
    assert branching_ratio(CASE1_THETA, LN10) == pytest.approx(
        0.018 * LN10 / (LN10 - 1.69) * 0.006 ** -0.2 / 0.2)
    assert branching_ratio(CASE1_THETA.replace(alpha=3.0), LN10) == np.inf
    assert branching_ratio(CASE1_THETA, LN10, 10.0) < branching_ratio(CASE1_THETA, LN10)


def test_background_locations_follow_piecewise_field():
    w = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 40000.0), 3.36)
    cfg = SimConfig(w, CASE1_THETA, background=case1_background(), seed=10)
    rng = np.random.default_rng(10)
    xy = np.vstack([simulate_background(cfg, rng).xy for _ in range(4)])
    assert len(xy) > 10_000
    edges = np.linspace(0.0, 5.0, 11)
    obs, _, _ = np.histogram2d(xy[:, 0], xy[:, 1], bins=[edges, edges])
    centers = 0.5 * (edges[1:] + edges[:-1])
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    mu = case1_background()(np.column_stack([gx.ravel(), gy.ravel()])).reshape(10, 10)
    # cell edges at 0.5 spacing line up with the field's boundaries at 1.5 and 3.0
    exp = mu / mu.sum() * len(xy)
    assert stats.chisquare(obs.ravel(), exp.ravel()).pvalue > 0.01


def test_branching_labels_form_a_forest():
    cat = simulate_catalog(SimConfig(W, CASE1_THETA, background=case1_background(), seed=11))
    root = np.arange(len(cat))
    for _ in range(len(cat)):
        parent = np.where(cat.z[root] > 0, cat.z[root] - 1, root)
        if np.array_equal(parent, root):
            break
        root = parent
    assert np.all(cat.z[root] == 0)
