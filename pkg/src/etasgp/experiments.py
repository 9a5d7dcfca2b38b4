"""Desk-scale replication of the synthetic area-source benchmark.

One replication simulates a training catalog, fits GP-ETAS and both KDE
baselines, and scores them on freshly simulated test catalogs whose
earlier part serves as history.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import KdeConfig, em_fit
from .catalog import DomainWindow
from .evaluation import (EvalGrid, l2_background, posterior_median_background,
                         test_log_likelihood_point, test_log_likelihood_posterior)
from .gibbs import GibbsConfig, GibbsSampler, Priors
from .simulator import LN10, SimConfig, simulate_catalog
from .triggering import CASE1_THETA, PARAM_NAMES, BackgroundField, TriggeringParams, case1_background

logger = logging.getLogger(__name__)

CASE1_M0 = 3.36


@dataclass
class ReplicationConfig:
    seed: int = 0
    t_train: float = 1000.0
    t_history: float = 500.0
    t_test_end: float = 1500.0
    n_test_sets: int = 12
    grid: tuple[int, int] = (50, 50)
    theta: TriggeringParams = CASE1_THETA
    background: BackgroundField = field(default_factory=case1_background)
    m0: float = CASE1_M0
    beta: float = LN10
    gibbs: GibbsConfig = field(default_factory=lambda: GibbsConfig(n_samples=3000, burn_in=1000))


def _window(t_end: float, m0: float) -> DomainWindow:
    return DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, t_end), m0)


def _seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def run_case1_replication(cfg: ReplicationConfig) -> dict:
    """Fit all three models on one simulated training catalog and score them."""
    t_start = time.time()
    seeds = np.random.SeedSequence(cfg.seed).spawn(2 + cfg.n_test_sets)
    train = simulate_catalog(SimConfig(_window(cfg.t_train, cfg.m0), cfg.theta,
                                       background=cfg.background, beta=cfg.beta,
                                       seed=_seed(seeds[0])))
    grid = EvalGrid(train.window, *cfg.grid)
    gcfg = replace(cfg.gibbs, seed=_seed(seeds[1]), probe_grid=cfg.grid)
    chain = GibbsSampler(train, Priors.default(train), gcfg).run()
    fits = {v: em_fit(train, KdeConfig(variant=v)) for v in ("classical", "silverman")}
    t_fit = time.time() - t_start

    summary = chain.summary()
    coverage = {n: bool(summary[n]["q05"] <= getattr(cfg.theta, n) <= summary[n]["q95"])
                for n in PARAM_NAMES}
    mu_gp = posterior_median_background(chain, grid)
    l2 = {"gp": l2_background(cfg.background, mu_gp, grid)}
    l2.update({v: l2_background(cfg.background, f.mu_kde, grid) for v, f in fits.items()})

    scores = {k: [] for k in ("truth", "gp", "classical", "silverman")}
    for ss in seeds[2:]:
        sim = simulate_catalog(SimConfig(_window(cfg.t_test_end, cfg.m0), cfg.theta,
                                         background=cfg.background, beta=cfg.beta,
                                         seed=_seed(ss)))
        hist = sim.subset(sim.t <= cfg.t_history, sim.window.with_t_range((0.0, cfg.t_history)))
        test = sim.subset(sim.t > cfg.t_history,
                          sim.window.with_t_range((cfg.t_history, cfg.t_test_end)))
        scores["truth"].append(test_log_likelihood_point((cfg.background, cfg.theta), test, hist, grid))
        scores["gp"].append(test_log_likelihood_posterior(chain, test, hist, grid))
        for v, f in fits.items():
            scores[v].append(test_log_likelihood_point((f.mu_kde, f.theta), test, hist, grid))
    l_test = {k: float(np.mean(v)) for k, v in scores.items()}
    out = {"seed": cfg.seed, "n_train": len(train), "n_background": int(np.sum(train.z == 0)),
           "coverage": coverage, "summary": summary, "acceptance": chain.acceptance_rates,
           "mle": {v: f.theta.to_dict() for v, f in fits.items()},
           "em_monotone": {v: bool(np.all(np.diff(f.log_likelihood) >= -1e-6))
                           for v, f in fits.items()},
           "l_test": l_test, "l_test_sets": scores, "l2": l2,
           "fit_seconds": t_fit, "seconds": time.time() - t_start}
    logger.info("replication %d: n=%d l_test=%s l2=%s", cfg.seed, len(train), l_test, l2)
    return out
