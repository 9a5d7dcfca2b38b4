"""
Simulating the Case-1 area-source benchmark
===========================================

A piecewise-constant background on [0, 5]^2 seeds a branching cascade
of aftershocks. We simulate 1000 days, look at how many events are
background and how many are triggered, and compare with what the model
predicts.
"""

import numpy as np

from etasgp import CASE1_THETA, DomainWindow, SimConfig, simulate_catalog
from etasgp.simulator import LN10, branching_ratio
from etasgp.triggering import case1_background

window = DomainWindow((0.0, 5.0), (0.0, 5.0), (0.0, 1000.0), 3.36)
background = case1_background()

# expected number of background events: |T| times the spatial integral of mu
expected_bg = background.integral(window) * window.duration
print(f"expected background events: {expected_bg:.2f}")

# each event produces on average n* direct offspring (over an infinite horizon)
n_star = branching_ratio(CASE1_THETA, LN10)
print(f"branching ratio n* = {n_star:.3f}")

cats = [simulate_catalog(SimConfig(window, CASE1_THETA, background=background, seed=s))
        for s in range(20)]
sizes = np.array([len(c) for c in cats])
n_bg = np.array([np.sum(c.z == 0) for c in cats])
print(f"background events over 20 runs: mean {n_bg.mean():.1f}")
print(f"catalog sizes: median {np.median(sizes):.0f}, max {sizes.max()}")

# catalog sizes are heavy tailed: a single large mainshock can trigger
# hundreds of events because productivity grows like exp(alpha (m - m0))
big = cats[int(np.argmax(sizes))]
print(f"largest run: {len(big)} events, largest magnitude {big.m.max():.2f}")

# every triggered event points to an earlier parent
kids = np.flatnonzero(big.z > 0)
assert np.all(big.t[big.z[kids] - 1] <= big.t[kids])
generations = np.zeros(len(big), dtype=int)
for i in kids:
    generations[i] = generations[big.z[i] - 1] + 1
print("events per generation:", np.bincount(generations).tolist())
