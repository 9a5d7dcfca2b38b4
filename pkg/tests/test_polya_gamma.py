import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from etasgp.polya_gamma import pg_laplace, pg_mean, sample_pg, sample_pg_series


def test_mean_formula():
    assert pg_mean(1.0, 0.0) == pytest.approx(0.25)
    assert pg_mean(1.0, 3.0) == pytest.approx(np.tanh(1.5) / 6.0)
    assert pg_mean(1.0, 1e-9) == pytest.approx(0.25)
    assert pg_mean(2.0, -2.0) == pytest.approx(2 * np.tanh(1.0) / 4.0)


def test_laplace_transform_closed_form():
    # E exp(-t w) for PG(1, 0) is 1 / cosh(sqrt(t / 2))
    for t in (0.5, 1.0, 2.0):
        assert pg_laplace(t, 1.0, 0.0) == pytest.approx(1.0 / np.cosh(np.sqrt(t / 2.0)))
    assert pg_laplace(0.0, 1.0, 2.0) == pytest.approx(1.0)


@pytest.mark.parametrize("c", [0.0, 3.0])
def test_sample_mean(c):
    w = sample_pg(np.full(100_000, c), np.random.default_rng(1))
    se = w.std(ddof=1) / np.sqrt(len(w))
    assert abs(w.mean() - pg_mean(1.0, c)) < 4 * se


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_sample_laplace(t):
    w = sample_pg(np.full(100_000, 1.5), np.random.default_rng(2))
    e = np.exp(-t * w)
    assert abs(e.mean() - pg_laplace(t, 1.0, 1.5)) < 4 * e.std(ddof=1) / np.sqrt(len(e))


@pytest.mark.parametrize("c", [0.0, 1.0, 4.0])
def test_matches_series_oracle(c):
    a = sample_pg(np.full(20_000, c), np.random.default_rng(3))
    b = sample_pg_series(np.full(20_000, c), np.random.default_rng(4), n_terms=200)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_deterministic_and_positive():
    c = np.linspace(-5, 5, 1000)
    a = sample_pg(c, np.random.default_rng(7))
    b = sample_pg(c, np.random.default_rng(7))
    assert np.array_equal(a, b)
    assert np.all(a > 0)
    assert sample_pg(np.empty(0), np.random.default_rng(0)).shape == (0,)


@settings(max_examples=20, deadline=None)
@given(st.floats(-20.0, 20.0))
def test_symmetric_in_c(c):
    a = sample_pg(np.full(5000, c), np.random.default_rng(11))
    b = sample_pg(np.full(5000, -c), np.random.default_rng(11))
    assert np.array_equal(a, b)
