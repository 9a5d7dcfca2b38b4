"""Classical ETAS baseline: weighted variable-bandwidth KDE background plus
EM-type maximum likelihood for the triggering parameters.

The EM iteration alternates an E-step (branching probabilities), an
M-step for theta with the background held fixed, and a background update
from the background probabilities. The background update is damped by
backtracking so the observed-data log-likelihood never decreases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.special import ndtr

from .catalog import Catalog, DomainWindow
from .errors import ConfigError, FitError, NonFiniteLikelihoodError
from .triggering import (BackgroundField, PairTable, TriggeringParams, integrated_triggering,
                         log_triggering, neutral_theta, omori_integral, windowed_log_likelihood)

logger = logging.getLogger(__name__)

# box for the M-step search (natural scale); q is searched as log(q - 1)
SEARCH_BOUNDS = {"c": (1e-6, 10.0), "p": (1e-3, 10.0), "alpha": (1e-6, 10.0),
                 "d": (1e-6, 10.0), "gamma": (1e-6, 10.0), "q_minus_1": (1e-4, 9.0)}
PAIR_WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class KdeConfig:
    n_p: int = 15
    d_min: float = 0.05
    variant: str = "classical"

    def __post_init__(self):
        if self.n_p < 1:
            raise ConfigError("n_p must be at least 1")
        if not self.d_min > 0:
            raise ConfigError("d_min must be positive")
        if self.variant not in ("classical", "silverman"):
            raise ConfigError(f"unknown KDE variant {self.variant!r}")


def silverman_bandwidth(xy) -> float:
    """Per-axis ``1.06 sd n^(-1/5)`` averaged over the two axes."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    n = len(xy)
    sd = xy.std(axis=0, ddof=1) if n > 1 else np.zeros(2)
    return float(np.mean(1.06 * sd * n ** (-0.2)))


def adaptive_bandwidths(cat: Catalog, cfg: KdeConfig) -> np.ndarray:
    """``d_i = max(d_min, distance from x_i to its n_p-th nearest neighbour)``."""
    n = len(cat)
    if n < cfg.n_p + 1:
        raise ConfigError(f"need at least n_p + 1 = {cfg.n_p + 1} events, got {n}")
    d_min = cfg.d_min if cfg.variant == "classical" else silverman_bandwidth(cat.xy)
    dist, _ = cKDTree(cat.xy).query(cat.xy, k=cfg.n_p + 1)
    return np.maximum(d_min, dist[:, cfg.n_p])


class KdeBackground(BackgroundField):
    """``mu(x) = (1/|T|) sum_i w_i N(x; x_i, d_i^2 I)``."""

    kind = "kde"

    def __init__(self, xy, weights, bandwidths, duration: float):
        self.xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=float)
        self.bandwidths = np.asarray(bandwidths, dtype=float)
        self.duration = float(duration)
        if np.any(self.weights < 0):
            raise ValueError("KDE weights must be nonnegative")

    def __call__(self, xy, chunk: int = 2048):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        out = np.empty(len(xy))
        h2 = self.bandwidths**2
        coef = self.weights / (2.0 * np.pi * h2) / self.duration
        for a in range(0, len(xy), chunk):
            d = xy[a:a + chunk, None, :] - self.xy[None, :, :]
            r2 = np.einsum("ijk,ijk->ij", d, d)
            out[a:a + chunk] = np.exp(-0.5 * r2 / h2) @ coef
        return out

    def integral(self, window: DomainWindow, n=None) -> float:
        """Exact integral over the rectangle via normal CDFs."""
        h = self.bandwidths
        px = ndtr((window.x_range[1] - self.xy[:, 0]) / h) - ndtr((window.x_range[0] - self.xy[:, 0]) / h)
        py = ndtr((window.y_range[1] - self.xy[:, 1]) / h) - ndtr((window.y_range[0] - self.xy[:, 1]) / h)
        return float(np.sum(self.weights * px * py) / self.duration)

    def supremum(self, window=None) -> float:
        return float(np.sum(self.weights / (2.0 * np.pi * self.bandwidths**2)) / self.duration)


def kde_background(cat: Catalog, p_background, bandwidths, t_window_length: float) -> KdeBackground:
    return KdeBackground(cat.xy, p_background, bandwidths, t_window_length)


@dataclass
class MleFit:
    theta: TriggeringParams
    p_background: np.ndarray
    mu_kde: KdeBackground
    log_likelihood: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    variant: str = "classical"

    def to_dict(self) -> dict:
        return {"theta": self.theta.to_dict(), "p_background": self.p_background.tolist(),
                "xy": self.mu_kde.xy.tolist(), "kde_weights": self.mu_kde.weights.tolist(),
                "bandwidths": self.mu_kde.bandwidths.tolist(),
                "duration": self.mu_kde.duration,
                "log_likelihood": list(self.log_likelihood), "n_iter": self.n_iter,
                "converged": self.converged, "variant": self.variant}

    @classmethod
    def from_dict(cls, d: dict) -> "MleFit":
        p0 = np.asarray(d["p_background"], dtype=float)
        mu = KdeBackground(np.asarray(d["xy"], dtype=float), np.asarray(d["kde_weights"], dtype=float),
                           np.asarray(d["bandwidths"], dtype=float), d["duration"])
        return cls(TriggeringParams.from_dict(d["theta"]), p0, mu, list(d["log_likelihood"]),
                   int(d["n_iter"]), bool(d["converged"]), d.get("variant", "classical"))


# ------------------------------------------------------------------ EM pieces

def e_step(mu_at_events, phi, pairs: PairTable):
    """Background probabilities and pair probabilities (rows sum to one)."""
    lam = mu_at_events + pairs.row_sums(phi)
    if np.any(~(lam > 0)):
        raise NonFiniteLikelihoodError("conditional intensity is not positive at an event")
    return mu_at_events / lam, phi / lam[pairs.target]


class _MStep:
    """Expected complete-data log-likelihood of theta given pair weights."""

    def __init__(self, cat: Catalog, pairs: PairTable, p_pair):
        keep = p_pair > PAIR_WEIGHT_FLOOR * max(float(p_pair.max(initial=0.0)), 1e-300)
        self.w = p_pair[keep]
        self.dt = pairs.dt[keep]
        self.r2 = pairs.r2[keep]
        self.dm = pairs.m_src[keep] - cat.m0
        self.span = cat.window.t_range[1] - cat.t
        self.dm_all = cat.m - cat.m0
        self.total = float(self.w.sum())
        self.m0 = cat.m0
        self.full = (pairs, p_pair, cat)

    def k0(self, alpha, c, p) -> float:
        denom = np.sum(np.exp(alpha * self.dm_all) * omori_integral(self.span, c, p))
        return self.total / denom if denom > 0 else 0.0

    def temporal(self, alpha, c, p) -> float:
        k0 = self.k0(alpha, c, p)
        if k0 <= 0:
            return 0.0
        return float(np.sum(self.w * (np.log(k0) + alpha * self.dm - p * np.log(self.dt + c)))
                     - self.total)

    def spatial(self, d, gamma, q) -> float:
        log_s = 2.0 * np.log(d) + 2.0 * gamma * self.dm * np.log(10.0)
        val = np.log(q - 1.0) - np.log(np.pi) - log_s - q * np.log1p(self.r2 / np.exp(log_s))
        return float(np.sum(self.w * val))

    def full_q(self, theta: TriggeringParams) -> float:
        """Exact expected complete-data triggering log-likelihood (all pairs)."""
        pairs, p_pair, cat = self.full
        pos = p_pair > 0
        val = 0.0
        if pos.any():
            if theta.K0 <= 0:
                return -np.inf
            val = np.sum(p_pair[pos] * log_triggering(pairs.dt[pos], pairs.r2[pos],
                                                      pairs.m_src[pos], theta, cat.m0))
        comp = integrated_triggering(cat.t, cat.m, cat.window.t_range[1], theta, cat.m0)
        return float(val - comp.sum())


def _search(fun, x0, bounds):
    lo = np.log([b[0] for b in bounds])
    hi = np.log([b[1] for b in bounds])
    y0 = np.clip(np.log(x0), lo, hi)

    def obj(y):
        v = fun(*np.exp(y))
        return -v if np.isfinite(v) else 1e300

    res = minimize(obj, y0, method="Powell", bounds=list(zip(lo, hi)),
                   options={"xtol": 1e-6, "ftol": 1e-10, "maxfev": 4000})
    y = res.x if obj(res.x) <= obj(y0) else y0
    return np.exp(y)


def m_step(cat: Catalog, pairs: PairTable, p_pair, theta: TriggeringParams) -> TriggeringParams:
    """Maximize the expected complete-data log-likelihood over theta.

    Temporal/productivity and spatial parts separate; K0 is profiled in
    closed form. The previous theta is kept if the search does not improve
    the exact objective.
    """
    ms = _MStep(cat, pairs, p_pair)
    if ms.total <= 0:
        return theta.replace(K0=0.0)
    b = SEARCH_BOUNDS
    alpha, c, p = _search(ms.temporal, [max(theta.alpha, 1e-6), theta.c, theta.p],
                          [b["alpha"], b["c"], b["p"]])
    d, gamma, qm1 = _search(lambda d_, g_, s_: ms.spatial(d_, g_, 1.0 + s_),
                            [theta.d, max(theta.gamma, 1e-6), theta.q - 1.0],
                            [b["d"], b["gamma"], b["q_minus_1"]])
    new = TriggeringParams(ms.k0(alpha, c, p), c, p, alpha, d, gamma, 1.0 + qm1)
    if theta.K0 > 0 and ms.full_q(new) < ms.full_q(theta):
        return theta
    return new


def observed_log_likelihood(cat: Catalog, mu: BackgroundField, theta: TriggeringParams,
                            pairs: PairTable) -> float:
    return windowed_log_likelihood(cat, cat.window.t_range, mu(cat.xy), mu.integral(cat.window),
                                   theta, pairs)


def em_fit(cat: Catalog, cfg: KdeConfig | None = None, init_theta: TriggeringParams | None = None,
           tol: float = 1e-6, max_iter: int = 200, max_backtrack: int = 10) -> MleFit:
    """Fit ETAS with a KDE background by EM.

    Each iteration: E-step, M-step for theta, E-step, background update.
    The background weights move from the old to the new background
    probabilities by the largest step in ``1, 1/2, ..., 2^-max_backtrack``
    that does not lower the observed log-likelihood (no move otherwise).
    Stops when an iteration changes the log-likelihood by less than ``tol``.
    """
    cfg = cfg or KdeConfig()
    theta = init_theta or neutral_theta(cat.window)
    bw = adaptive_bandwidths(cat, cfg)
    pairs = PairTable.within(cat)
    duration = cat.window.duration
    weights = np.full(len(cat), 0.5)
    mu = KdeBackground(cat.xy, weights, bw, duration)
    trace = []
    try:
        ll = observed_log_likelihood(cat, mu, theta, pairs)
        trace.append(ll)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            mu_ev = mu(cat.xy)
            _, p_pair = e_step(mu_ev, pairs.phi(theta), pairs)
            new_theta = m_step(cat, pairs, p_pair, theta)
            ll_theta = observed_log_likelihood(cat, mu, new_theta, pairs)
            if ll_theta >= ll:
                theta, ll = new_theta, ll_theta
            p0, _ = e_step(mu_ev, pairs.phi(theta), pairs)
            step = 1.0
            for _ in range(max_backtrack + 1):
                cand_w = (1.0 - step) * weights + step * p0
                cand = KdeBackground(cat.xy, cand_w, bw, duration)
                ll_mu = observed_log_likelihood(cat, cand, theta, pairs)
                if ll_mu >= ll:
                    weights, mu, ll = cand_w, cand, ll_mu
                    break
                step *= 0.5
            trace.append(ll)
            if abs(trace[-1] - trace[-2]) < tol:
                converged = True
                break
    except NonFiniteLikelihoodError as exc:
        raise FitError(f"EM failed: {exc}", theta.to_dict()) from exc
    p_final, _ = e_step(mu(cat.xy), pairs.phi(theta), pairs)
    logger.info("em_fit(%s): %d iterations, log-likelihood %.4f", cfg.variant, it, ll)
    return MleFit(theta, p_final, mu, trace, it, converged, cfg.variant)
