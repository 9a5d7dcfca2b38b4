"""Held-out log-likelihood and background-error metrics on a regular grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .catalog import Catalog, DomainWindow, concatenate
from .errors import ConfigError, NonFiniteLikelihoodError
from .triggering import BackgroundField, GridBackground, PairTable, TriggeringParams, windowed_log_likelihood

DAYS_PER_YEAR = 365.25
PERIODS = {"30d": 30.0, "1y": DAYS_PER_YEAR, "5y": 5 * DAYS_PER_YEAR, "total": None}


@dataclass(frozen=True)
class EvalGrid:
    """``nx`` x ``ny`` cells tiling the spatial window; values are taken at cell centers."""

    window: DomainWindow
    nx: int = 50
    ny: int = 50

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("evaluation grid needs at least 2 cells per axis")

    @property
    def cell_area(self) -> float:
        return self.window.area / (self.nx * self.ny)

    @property
    def centers(self) -> np.ndarray:
        """Cell centers, x-index major (row ``i * ny + j`` is cell ``(i, j)``)."""
        w = self.window
        xs = w.x_range[0] + (np.arange(self.nx) + 0.5) * (w.x_range[1] - w.x_range[0]) / self.nx
        ys = w.y_range[0] + (np.arange(self.ny) + 0.5) * (w.y_range[1] - w.y_range[0]) / self.ny
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def riemann(self, field: BackgroundField) -> float:
        return float(np.sum(field(self.centers)) * self.cell_area)

    def field_from_values(self, values) -> GridBackground:
        return GridBackground(self.window, np.asarray(values, dtype=float).reshape(self.nx, self.ny),
                              kind="gp-sample")


class _TestWindow:
    """History plus test events and the pair table of the window, built once."""

    def __init__(self, test: Catalog, history: Catalog | None, t_window=None):
        if history is not None and len(history) and len(test) and history.t.max() > test.t.min():
            raise ConfigError("history events must precede the test events")
        self.t_window = tuple(t_window) if t_window is not None else test.window.t_range
        if history is None or len(history) == 0:
            self.cat = test.subset(np.ones(len(test), bool), test.window.with_t_range(
                (min(test.window.t_range[0], self.t_window[0]), test.window.t_range[1])))
        else:
            w = test.window.with_t_range((history.window.t_range[0], test.window.t_range[1]))
            self.cat = concatenate(history, test, w)
        t0, t1 = self.t_window
        inside = (self.cat.t > t0) & (self.cat.t <= t1)
        if t0 <= self.cat.window.t_range[0]:
            inside |= self.cat.t == t0
        idx = np.flatnonzero(inside)
        c = self.cat
        self.pairs = PairTable(c.t[idx], c.xy[idx], c.t, c.xy, c.m, c.m0)
        self.n_test = len(idx)

    def log_likelihood(self, mu: BackgroundField, theta: TriggeringParams, grid: EvalGrid) -> float:
        mu_ev = mu(self.cat.xy) if len(self.cat) else np.empty(0)
        return windowed_log_likelihood(self.cat, self.t_window, mu_ev, grid.riemann(mu), theta,
                                       self.pairs)


def test_log_likelihood_point(model, test: Catalog, history: Catalog | None, grid: EvalGrid,
                              t_window=None) -> float:
    """Log-likelihood of the test events under a point model ``(mu, theta)``.

    Events of ``history`` contribute to the intensity but are not scored.
    The background integral is a Riemann sum on ``grid``.
    """
    mu, theta = model
    return _TestWindow(test, history, t_window).log_likelihood(mu, theta, grid)


def chain_fields(chain, grid: EvalGrid):
    """(background field, theta) for every chain sample carrying probe values."""
    probe = chain.probe
    if probe is None or (probe["nx"], probe["ny"]) != (grid.nx, grid.ny):
        raise ConfigError("chain probe grid does not match the evaluation grid")
    return [(grid.field_from_values(s.probe_mu), s.theta) for s in chain.probe_samples()]


def log_mean_exp(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - np.log(len(values)))


def test_log_likelihood_posterior(chain, test: Catalog, history: Catalog | None, grid: EvalGrid,
                                  t_window=None) -> float:
    """``log (1/K) sum_k L(test | sample k)`` over the samples with probe values."""
    models = chain_fields(chain, grid)
    if not models:
        raise ConfigError("chain has no samples with background probe values")
    tw = _TestWindow(test, history, t_window)
    lls = [tw.log_likelihood(mu, theta, grid) for mu, theta in models]
    out = log_mean_exp(lls)
    if not np.isfinite(out):
        raise NonFiniteLikelihoodError("posterior test log-likelihood is not finite")
    return out


def l2_background(mu_true: BackgroundField, mu_hat: BackgroundField, grid: EvalGrid) -> float:
    """``sqrt(sum_cells (mu - mu_hat)^2 * cell_area)``."""
    x = grid.centers
    return float(np.sqrt(np.sum((mu_true(x) - mu_hat(x)) ** 2) * grid.cell_area))


def posterior_median_background(chain, grid: EvalGrid) -> GridBackground:
    vals = np.array([s.probe_mu for s in chain.probe_samples()])
    if not len(vals):
        raise ConfigError("chain has no samples with background probe values")
    return grid.field_from_values(np.median(vals, axis=0))


def period_windows(t_start: float, t_end: float, periods=PERIODS) -> dict:
    """Test windows ``(t_start, t_start + length]`` clipped at ``t_end``."""
    return {name: (t_start, t_end if length is None else min(t_start + length, t_end))
            for name, length in periods.items()}


def period_report(score, test: Catalog, history: Catalog | None, periods=PERIODS) -> dict:
    """Apply ``score(test, history, t_window)`` to each period window.

    Returns ``{"l_test", "n_test", "periods": {name: {"l_test", "n_test", "t_window"}}}``.
    """
    t0, t1 = test.window.t_range
    out = {}
    for name, tw in period_windows(t0, t1, periods).items():
        n = int(np.sum((test.t > tw[0]) & (test.t <= tw[1])))
        out[name] = {"l_test": float(score(test, history, tw)), "n_test": n,
                     "t_window": [tw[0], tw[1]]}
    return {"l_test": out["total"]["l_test"], "n_test": out["total"]["n_test"], "periods": out}


# keep pytest from collecting the metric functions when imported into test modules
test_log_likelihood_point.__test__ = False
test_log_likelihood_posterior.__test__ = False
