"""Forward simulation of GP-ETAS / ETAS catalogs.

Background events are produced by thinning a homogeneous process of rate
``lambda_bar`` against either a sigmoid-GP field or an explicit background
field. Offspring are added generation by generation until a generation is
empty.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .catalog import Catalog, DomainWindow
from .errors import ConfigError, SupercriticalError
from .gaussian_process import DEFAULT_JITTER, GpHyperParams, sample_prior
from .triggering import BackgroundField, TriggeringParams, integrated_triggering, omori_integral

logger = logging.getLogger(__name__)

MAX_EVENTS = 1_000_000
LN10 = float(np.log(10.0))


@dataclass
class SimConfig:
    """Inputs of a forward simulation.

    Exactly one of ``background`` (explicit field) and ``nu`` (GP source)
    must be given. For an explicit field ``lambda_bar`` defaults to the
    field's supremum on the window and must not be smaller than it.
    ``offspring_method`` is ``"inversion"`` (exact draws from the truncated
    Omori law) or ``"thinning"`` (candidate thinning against ``K c^-p``).
    """

    window: DomainWindow
    theta: TriggeringParams
    lambda_bar: float | None = None
    background: BackgroundField | None = None
    nu: GpHyperParams | None = None
    beta: float = LN10
    seed: int = 0
    offspring_method: str = "inversion"
    max_events: int = MAX_EVENTS
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if (self.background is None) == (self.nu is None):
            raise ConfigError("give exactly one of an explicit background or GP hyperparameters")
        if self.background is not None:
            sup = self.background.supremum(self.window)
            if self.lambda_bar is None:
                self.lambda_bar = sup
            elif self.lambda_bar < sup * (1 - 1e-12):
                raise ConfigError(f"lambda_bar={self.lambda_bar} below background supremum {sup}")
        if self.lambda_bar is None or not self.lambda_bar >= 0:
            raise ConfigError("lambda_bar must be positive")
        if self.lambda_bar == 0 and self.nu is not None:
            raise ConfigError("lambda_bar must be positive")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.offspring_method not in ("inversion", "thinning"):
            raise ConfigError(f"unknown offspring method {self.offspring_method!r}")

    @property
    def m0(self) -> float:
        return self.window.m0


def _marks(n: int, cfg: SimConfig, rng) -> np.ndarray:
    return cfg.m0 + rng.exponential(1.0 / cfg.beta, size=n)


def simulate_background(cfg: SimConfig, rng: np.random.Generator, return_f: bool = False):
    """Background events by thinning (all labels 0).

    With ``return_f`` the candidate locations and GP values are returned
    as well (GP source only; ``None`` otherwise).
    """
    w = cfg.window
    n = rng.poisson(cfg.lambda_bar * w.area * w.duration) if cfg.lambda_bar > 0 else 0
    xy = w.uniform_xy(n, rng)
    f = None
    if cfg.nu is not None:
        f = sample_prior(xy, cfg.nu, rng, cfg.jitter).values
        accept_rate = cfg.lambda_bar * expit(f)
    else:
        accept_rate = cfg.background(xy) if n else np.empty(0)
    r = rng.uniform(0.0, cfg.lambda_bar, size=n)
    keep = r < accept_rate
    k = int(keep.sum())
    t = rng.uniform(w.t_range[0], w.t_range[1], size=k)
    m = _marks(k, cfg, rng)
    order = np.argsort(t, kind="stable")
    cat = Catalog(t[order], xy[keep][order], m[order], w, z=np.zeros(k, dtype=np.int64))
    if return_f:
        return cat, (xy, f)
    return cat


def _offspring_times_inversion(t_par, m_par, cfg: SimConfig, rng):
    th, t_end = cfg.theta, cfg.window.t_range[1]
    expected = integrated_triggering(t_par, m_par, t_end, th, cfg.m0)
    counts = rng.poisson(expected)
    idx = np.repeat(np.arange(len(t_par)), counts)
    span = (t_end - t_par)[idx]
    # invert the truncated Omori CDF: I(s) = u I(span)
    y = rng.random(len(idx)) * omori_integral(span, th.c, th.p)
    a = 1.0 - th.p
    if abs(a) < 1e-10:
        L = y
    else:
        L = np.log1p(a * y * th.c ** (-a)) / a
    dt = th.c * np.expm1(L)
    return idx, t_par[idx] + np.minimum(dt, span)


def _offspring_times_thinning(t_par, m_par, cfg: SimConfig, rng):
    th, t_end = cfg.theta, cfg.window.t_range[1]
    lam_max = th.K0 * np.exp(th.alpha * (m_par - cfg.m0)) * th.c ** (-th.p)
    idx_out, t_out = [], []
    for j in range(len(t_par)):
        span = t_end - t_par[j]
        n = rng.poisson(lam_max[j] * span)
        if n == 0:
            continue
        if n > cfg.max_events * 10:
            raise SupercriticalError(f"{n} thinning candidates for one parent")
        tc = rng.uniform(0.0, span, size=n)
        r = rng.uniform(0.0, lam_max[j], size=n)
        ok = r < lam_max[j] * (tc / th.c + 1.0) ** (-th.p)
        idx_out.append(np.full(ok.sum(), j))
        t_out.append(t_par[j] + tc[ok])
    if not idx_out:
        return np.empty(0, dtype=int), np.empty(0)
    return np.concatenate(idx_out), np.concatenate(t_out)


def sample_offspring_offsets(m_par, theta: TriggeringParams, m0: float, rng) -> np.ndarray:
    """Spatial offsets drawn from the Pareto kernel around parents of magnitude ``m_par``."""
    m_par = np.asarray(m_par, dtype=float)
    sig = theta.d**2 * 10.0 ** (2.0 * theta.gamma * (m_par - m0))
    u = rng.random(len(m_par))
    # P(R^2 > r2) = (1 + r2 / sigma)^(1 - q)
    r = np.sqrt(sig * (u ** (-1.0 / (theta.q - 1.0)) - 1.0))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=len(m_par))
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def simulate_offspring(background: Catalog, cfg: SimConfig, rng: np.random.Generator) -> Catalog:
    """Add all generations of offspring to ``background``.

    Returns a time-sorted catalog whose ``z`` holds 0 for background events
    and the 1-based index (in the returned order) of the parent otherwise.
    Offspring located outside the spatial window are discarded.
    """
    w = cfg.window
    t = [background.t]
    xy = [background.xy]
    m = [background.m]
    parent = [np.full(len(background), -1, dtype=np.int64)]
    n_total = len(background)
    gen_t, gen_xy, gen_m = background.t, background.xy, background.m
    gen_offset = 0
    draw = _offspring_times_inversion if cfg.offspring_method == "inversion" else _offspring_times_thinning
    while len(gen_t) and cfg.theta.K0 > 0:
        idx, t_new = draw(gen_t, gen_m, cfg, rng)
        if len(idx) == 0:
            break
        xy_new = gen_xy[idx] + sample_offspring_offsets(gen_m[idx], cfg.theta, cfg.m0, rng)
        m_new = _marks(len(idx), cfg, rng)
        inside = w.contains_xy(xy_new) & (t_new <= w.t_range[1])
        idx, t_new, xy_new, m_new = idx[inside], t_new[inside], xy_new[inside], m_new[inside]
        parent.append(gen_offset + idx)
        gen_offset = n_total
        n_total += len(idx)
        if n_total > cfg.max_events:
            raise SupercriticalError(
                f"cascade exceeded {cfg.max_events} events; branching ratio likely >= 1")
        t.append(t_new)
        xy.append(xy_new)
        m.append(m_new)
        gen_t, gen_xy, gen_m = t_new, xy_new, m_new
    t = np.concatenate(t)
    xy = np.concatenate(xy).reshape(-1, 2)
    m = np.concatenate(m)
    parent = np.concatenate(parent)
    order = np.argsort(t, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    z = np.where(parent[order] >= 0, rank[np.maximum(parent[order], 0)] + 1, 0)
    return Catalog(t[order], xy[order], m[order], w, z=z)


def simulate_catalog(cfg: SimConfig, rng: np.random.Generator | None = None) -> Catalog:
    """Background plus offspring; deterministic given ``cfg.seed`` when ``rng`` is omitted."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    bg = simulate_background(cfg, rng)
    cat = simulate_offspring(bg, cfg, rng)
    logger.info("simulated %d events (%d background)", len(cat), len(bg))
    return cat


def branching_ratio(theta: TriggeringParams, beta: float, duration: float = np.inf) -> float:
    """Mean number of direct offspring per event for exponential marks.

    ``duration`` truncates the Omori integral; infinite if ``alpha >= beta``.
    """
    if theta.alpha >= beta:
        return np.inf
    time_part = (theta.c ** (1 - theta.p) / (theta.p - 1) if np.isinf(duration) and theta.p > 1
                 else float(omori_integral(duration, theta.c, theta.p)))
    return theta.K0 * beta / (beta - theta.alpha) * time_part
