"""
Fitting GP-ETAS and the KDE baselines
=====================================

We simulate a Case-1 catalog, fit the Bayesian model with the augmented
Gibbs sampler and the classical ETAS model by EM, then compare the
triggering parameters, the recovered background and the held-out
log-likelihood. The chain here is short so the script runs in about a
minute; use the CLI with the default settings for real fits.
"""

from etasgp import CASE1_THETA, DomainWindow, SimConfig, simulate_catalog
from etasgp.baseline import KdeConfig, em_fit
from etasgp.catalog import split_catalog
from etasgp.evaluation import (EvalGrid, l2_background, posterior_median_background,
                               test_log_likelihood_point, test_log_likelihood_posterior)
from etasgp.gibbs import GibbsConfig, GibbsSampler, Priors
from etasgp.triggering import PARAM_NAMES, case1_background

window = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 1500.0), 3.36)
truth = case1_background()
cat = simulate_catalog(SimConfig(window, CASE1_THETA, background=truth, seed=3))
train, test = split_catalog(cat, 1000.0)
print(f"{len(train)} training events, {len(test)} test events")

# Gibbs sampler: z, Pi, omega, lambda_bar, f, nu and theta in turn
grid = EvalGrid(train.window, 25, 25)
config = GibbsConfig(n_samples=1000, burn_in=2000, seed=1, probe_grid=(25, 25), probe_thin=10)
sampler = GibbsSampler(train, Priors.default(train), config)
chain = sampler.run()
print("acceptance rates:", {k: round(v, 2) for k, v in chain.acceptance_rates.items()})

# EM with a variable-bandwidth KDE background
mle = em_fit(train, KdeConfig(variant="classical"))

summary = chain.summary()
print(f"{'':6s} {'truth':>8s} {'EM':>8s} {'median':>8s} {'q05':>8s} {'q95':>8s}")
for name in PARAM_NAMES:
    s = summary[name]
    print(f"{name:6s} {getattr(CASE1_THETA, name):8.4f} {getattr(mle.theta, name):8.4f} "
          f"{s['median']:8.4f} {s['q05']:8.4f} {s['q95']:8.4f}")

# background recovery on the grid
mu_gp = posterior_median_background(chain, grid)
print(f"l2 error of the background: GP {l2_background(truth, mu_gp, grid):.4f}, "
      f"KDE {l2_background(truth, mle.mu_kde, grid):.4f}")

# the high-rate block (x < 3, y > 1.5) should stand out in the posterior median
mu = mu_gp(grid.centers).reshape(25, 25)
print(f"posterior median mu, x<3 and y>1.5: {mu[:15, 8:].mean():.5f} (truth 0.005)")
print(f"posterior median mu, y<1.5:         {mu[:, :7].mean():.5f} (truth 0.0005)")

# held-out log-likelihood; the first 1000 days act as history
l_gp = test_log_likelihood_posterior(chain, test, train, grid)
l_em = test_log_likelihood_point((mle.mu_kde, mle.theta), test, train, grid)
print(f"l_test: GP-ETAS {l_gp:.2f}, ETAS-classical {l_em:.2f}")
