"""ETAS triggering kernel, conditional intensity and point-process likelihood.

The triggering function is separable,

    phi(dt, dx | m) = K0 exp(alpha (m - m0)) * (dt + c)^-p * s(dx | m),

with the long-range spatial kernel

    s(dx | m) = (q - 1) / (pi sigma_m) * (1 + |dx|^2 / sigma_m)^-q,
    sigma_m = d^2 10^(2 gamma (m - m0)),

which integrates to one over the plane for ``q > 1``. Integrals of the
triggering term over space are taken over the whole plane throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .catalog import Catalog, DomainWindow
from .errors import (DegenerateIntensityError, DomainError, InvalidParameterError,
                     NonFiniteLikelihoodError)

PARAM_NAMES = ("K0", "c", "p", "alpha", "d", "gamma", "q")
P_ONE_TOL = 1e-10


@dataclass(frozen=True)
class TriggeringParams:
    K0: float
    c: float
    p: float
    alpha: float
    d: float
    gamma: float
    q: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        if not all(np.isfinite(self.as_array())):
            raise InvalidParameterError(f"non-finite triggering parameters {self}")
        if min(self.c, self.p, self.d) <= 0 or self.K0 < 0 or self.alpha < 0 or self.gamma < 0:
            raise InvalidParameterError(f"triggering parameters must be positive: {self}")
        if self.q <= 1:
            raise InvalidParameterError(f"q must exceed 1 (got {self.q}); kernel not normalizable")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, values) -> "TriggeringParams":
        return cls(*[float(v) for v in values])

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "TriggeringParams":
        return cls(**{n: float(d[n]) for n in PARAM_NAMES})

    def replace(self, **kw) -> "TriggeringParams":
        d = self.to_dict()
        d.update(kw)
        return TriggeringParams(**d)


# Generative triggering parameters of the synthetic benchmarks.
CASE1_THETA = TriggeringParams(K0=0.018, c=0.006, p=1.20, alpha=1.69, d=0.015, gamma=0.20, q=2.0)


def neutral_theta(window: DomainWindow) -> TriggeringParams:
    """Generic subcritical starting point for fitting (spatial scale tied to the window)."""
    return TriggeringParams(K0=0.05, c=0.01, p=1.1, alpha=1.0,
                            d=0.01 * float(np.sqrt(window.area)), gamma=0.3, q=2.0)


# ---------------------------------------------------------------- backgrounds

class BackgroundField:
    """Time-stationary background intensity mu(x) (events / time / area)."""

    kind = "generic"

    def __call__(self, xy) -> np.ndarray:
        raise NotImplementedError

    def integral(self, window: DomainWindow, n: int = 400) -> float:
        """Spatial integral over ``window``; midpoint rule unless overridden."""
        xs = window.x_range[0] + (np.arange(n) + 0.5) * (window.x_range[1] - window.x_range[0]) / n
        ys = window.y_range[0] + (np.arange(n) + 0.5) * (window.y_range[1] - window.y_range[0]) / n
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        vals = self(np.column_stack([gx.ravel(), gy.ravel()]))
        return float(vals.sum() * window.area / n**2)

    def supremum(self, window: DomainWindow) -> float:
        """Upper bound of the field on ``window`` (grid estimate by default)."""
        xs = np.linspace(*window.x_range, 201)
        ys = np.linspace(*window.y_range, 201)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return float(self(np.column_stack([gx.ravel(), gy.ravel()])).max())


class ConstantBackground(BackgroundField):
    kind = "constant"

    def __init__(self, value: float):
        if value < 0:
            raise InvalidParameterError("background intensity must be nonnegative")
        self.value = float(value)

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.full(len(xy), self.value)

    def integral(self, window, n=None):
        return self.value * window.area

    def supremum(self, window):
        return self.value


class PiecewiseBackground(BackgroundField):
    """Piecewise-constant field on axis-aligned rectangles.

    ``cells`` is a sequence of ``((x0, x1), (y0, y1), value)``; the first
    matching rectangle wins and ``default`` applies elsewhere. Rectangles
    must not overlap in their interiors.
    """

    kind = "piecewise"

    def __init__(self, cells, default: float = 0.0):
        self.cells = [((float(a), float(b)), (float(c), float(d)), float(v))
                      for (a, b), (c, d), v in cells]
        self.default = float(default)
        if self.default < 0 or any(v < 0 for *_, v in self.cells):
            raise InvalidParameterError("background intensity must be nonnegative")
        for i, (xa, ya, _) in enumerate(self.cells):
            for xb, yb, _ in self.cells[i + 1:]:
                if _overlap(xa, xb) * _overlap(ya, yb) > 0:
                    raise InvalidParameterError("piecewise cells overlap")

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        out = np.full(len(xy), self.default)
        done = np.zeros(len(xy), dtype=bool)
        for (x0, x1), (y0, y1), v in self.cells:
            inside = (~done & (xy[:, 0] >= x0) & (xy[:, 0] <= x1)
                      & (xy[:, 1] >= y0) & (xy[:, 1] <= y1))
            out[inside] = v
            done |= inside
        return out

    def integral(self, window, n=None):
        total = self.default * window.area
        for xr, yr, v in self.cells:
            a = _overlap(xr, window.x_range) * _overlap(yr, window.y_range)
            total += (v - self.default) * a
        return float(total)

    def supremum(self, window):
        vals = [v for xr, yr, v in self.cells
                if _overlap(xr, window.x_range) * _overlap(yr, window.y_range) > 0]
        return max(vals + [self.default])


def _overlap(a, b) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


class GridBackground(BackgroundField):
    """Cell-wise constant field on a regular ``nx`` x ``ny`` grid over a window.

    ``values[i, j]`` belongs to the cell with x-index ``i`` and y-index ``j``.
    Points outside the window take the value of the nearest edge cell.
    """

    kind = "grid"

    def __init__(self, window: DomainWindow, values, kind: str | None = None):
        self.window = window
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("grid values must be two-dimensional")
        if np.any(self.values < 0):
            raise InvalidParameterError("background intensity must be nonnegative")
        if kind is not None:
            self.kind = kind

    def cell_index(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        nx, ny = self.values.shape
        w = self.window
        i = np.floor((xy[:, 0] - w.x_range[0]) / (w.x_range[1] - w.x_range[0]) * nx).astype(int)
        j = np.floor((xy[:, 1] - w.y_range[0]) / (w.y_range[1] - w.y_range[0]) * ny).astype(int)
        return np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)

    def __call__(self, xy):
        i, j = self.cell_index(xy)
        return self.values[i, j]

    def integral(self, window=None, n=None):
        if window is not None and window.area != self.window.area:
            return super().integral(window)
        return float(self.values.mean() * self.window.area)

    def supremum(self, window=None):
        return float(self.values.max())


class FunctionBackground(BackgroundField):
    """Wrap an arbitrary vectorized callable ``fn(xy) -> values``."""

    def __init__(self, fn, kind: str = "generic"):
        self.fn = fn
        self.kind = kind

    def __call__(self, xy):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(xy, dtype=float))), dtype=float)


def case1_background() -> PiecewiseBackground:
    """Area-source background of synthetic Case 1 on [0, 5]^2."""
    return PiecewiseBackground([
        ((0.0, 3.0), (1.5, 5.0), 0.005),
        ((3.0, 5.0), (1.5, 5.0), 0.001),
        ((0.0, 5.0), (0.0, 1.5), 0.0005),
    ])


def case2_background() -> PiecewiseBackground:
    """Fault-type background of synthetic Case 2 on [0, 5]^2."""
    return PiecewiseBackground([
        ((1.0, 3.0), (1.4, 1.5), 0.07035),
        ((1.0, 4.0), (2.4, 2.5), 0.07035),
        ((2.0, 3.0), (3.9, 4.0), 0.03535),
    ], default=0.00035)


# ----------------------------------------------------------- kernel pieces

def productivity(m, params: TriggeringParams, m0: float):
    """Expected-offspring scale ``K0 exp(alpha (m - m0))``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < m0):
        raise DomainError("magnitude below m0")
    return params.K0 * np.exp(params.alpha * (m - m0))


def omori(dt, params: TriggeringParams):
    """Temporal decay ``(dt + c)^-p``."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise DomainError("elapsed time must be nonnegative")
    return (dt + params.c) ** (-params.p)


def sigma_m(m, params: TriggeringParams, m0: float):
    return params.d**2 * 10.0 ** (2.0 * params.gamma * (np.asarray(m, dtype=float) - m0))


def spatial_kernel(dx, m, params: TriggeringParams, m0: float):
    """Pareto-type spatial offspring density around a parent of magnitude ``m``."""
    if params.q <= 1:
        raise InvalidParameterError("q must exceed 1")
    m = np.asarray(m, dtype=float)
    if np.any(m < m0):
        raise DomainError("magnitude below m0")
    dx = np.asarray(dx, dtype=float)
    r2 = np.sum(dx * dx, axis=-1)
    s = sigma_m(m, params, m0)
    return (params.q - 1.0) / (np.pi * s) * (1.0 + r2 / s) ** (-params.q)


def omori_integral(s, c, p):
    """``int_0^s (u + c)^-p du``, stable for ``p`` near 1."""
    s = np.asarray(s, dtype=float)
    a = 1.0 - p
    L = np.log1p(s / c)
    if abs(a) < P_ONE_TOL:
        return L
    return c**a * np.expm1(a * L) / a


def integrated_triggering(t_i, m_i, t_end, params: TriggeringParams, m0: float):
    """Expected number of direct offspring of events in ``(t_i, t_end]``."""
    t_i = np.asarray(t_i, dtype=float)
    span = np.asarray(t_end, dtype=float) - t_i
    if np.any(span < 0):
        raise DomainError("t_end must not precede t_i")
    return productivity(m_i, params, m0) * omori_integral(span, params.c, params.p)


def triggering(dt, r2, m_src, params: TriggeringParams, m0: float):
    """phi evaluated from elapsed times and squared distances (no checks)."""
    s = params.d**2 * 10.0 ** (2.0 * params.gamma * (m_src - m0))
    return (params.K0 * np.exp(params.alpha * (m_src - m0))
            * (dt + params.c) ** (-params.p)
            * (params.q - 1.0) / (np.pi * s) * (1.0 + r2 / s) ** (-params.q))


def log_triggering(dt, r2, m_src, params: TriggeringParams, m0: float):
    dm = m_src - m0
    log_s = 2.0 * np.log(params.d) + 2.0 * params.gamma * dm * np.log(10.0)
    return (np.log(params.K0) + params.alpha * dm - params.p * np.log(dt + params.c)
            + np.log(params.q - 1.0) - np.log(np.pi) - log_s
            - params.q * np.log1p(r2 / np.exp(log_s)))


# ----------------------------------------------------------- pairs

class PairTable:
    """All (target, source) event pairs with ``t_source < t_target``.

    Pairs are ordered by target then source, which lets per-target sums
    and categorical draws run on flat arrays.
    """

    def __init__(self, t_tgt, xy_tgt, t_src, xy_src, m_src, m0: float):
        t_tgt = np.asarray(t_tgt, dtype=float)
        t_src = np.asarray(t_src, dtype=float)
        xy_tgt = np.asarray(xy_tgt, dtype=float).reshape(-1, 2)
        xy_src = np.asarray(xy_src, dtype=float).reshape(-1, 2)
        self.n_targets = len(t_tgt)
        self.m0 = float(m0)
        # sources sorted by time: the valid sources of a target form a prefix
        n_valid = np.searchsorted(t_src, t_tgt, side="left")
        self.target = np.repeat(np.arange(self.n_targets), n_valid)
        starts = np.concatenate([[0], np.cumsum(n_valid)[:-1]]) if self.n_targets else np.empty(0, int)
        self.source = (np.arange(len(self.target)) - np.repeat(starts, n_valid)).astype(np.int64)
        self.row_start = starts.astype(np.int64)
        self.row_len = n_valid.astype(np.int64)
        self.dt = t_tgt[self.target] - t_src[self.source]
        d = xy_tgt[self.target] - xy_src[self.source]
        self.r2 = np.einsum("ij,ij->i", d, d)
        self.m_src = np.asarray(m_src, dtype=float)[self.source]

    @classmethod
    def within(cls, cat: Catalog) -> "PairTable":
        return cls(cat.t, cat.xy, cat.t, cat.xy, cat.m, cat.m0)

    def __len__(self):
        return len(self.dt)

    def phi(self, params: TriggeringParams) -> np.ndarray:
        return triggering(self.dt, self.r2, self.m_src, params, self.m0)

    def row_sums(self, values) -> np.ndarray:
        return np.bincount(self.target, weights=values, minlength=self.n_targets)


# ----------------------------------------------------------- intensity

def conditional_intensity(t, x, cat: Catalog, mu: BackgroundField,
                          params: TriggeringParams) -> float:
    """lambda(t, x | H_t) = mu(x) + sum over events strictly before t of phi."""
    x = np.asarray(x, dtype=float).reshape(2)
    past = cat.t < t
    base = float(mu(x[None, :])[0])
    if not np.any(past):
        return base
    dx = x[None, :] - cat.xy[past]
    phi = triggering(t - cat.t[past], np.sum(dx * dx, axis=1), cat.m[past], params, cat.m0)
    return base + float(phi.sum())


def branching_probabilities(i: int, cat: Catalog, mu: BackgroundField,
                            params: TriggeringParams) -> np.ndarray:
    """Parent probabilities of event ``i`` (0-based).

    Entry 0 is the background probability, entry ``j`` (1..i) the
    probability that event ``j - 1`` triggered event ``i``. Candidates at
    the same time as event ``i`` get probability zero.
    """
    if not 0 <= i < len(cat):
        raise DomainError(f"event index {i} out of range")
    mu_i = float(mu(cat.xy[i][None, :])[0])
    dt = cat.t[i] - cat.t[:i]
    valid = dt > 0
    dx = cat.xy[i][None, :] - cat.xy[:i]
    phi = np.zeros(i)
    phi[valid] = triggering(dt[valid], np.sum(dx[valid] ** 2, axis=1), cat.m[:i][valid],
                            params, cat.m0)
    w = np.concatenate([[mu_i], phi])
    total = w.sum()
    if not total > 0:
        raise DegenerateIntensityError(f"conditional intensity vanishes at event {i}")
    return w / total


def log_likelihood(cat: Catalog, mu: BackgroundField, params: TriggeringParams,
                   mu_integral: float | None = None) -> float:
    """Point-process log-likelihood of ``cat`` on its own window.

    ``mu_integral`` is the spatial integral of ``mu`` over the window; it is
    computed with :meth:`BackgroundField.integral` when omitted.
    """
    if mu_integral is None:
        mu_integral = mu.integral(cat.window)
    return windowed_log_likelihood(cat, cat.window.t_range, mu(cat.xy) if len(cat) else np.empty(0),
                                   mu_integral, params)


def windowed_log_likelihood(cat: Catalog, t_window, mu_at_events, mu_integral: float,
                            params: TriggeringParams, pairs: PairTable | None = None) -> float:
    """Log-likelihood of the events of ``cat`` inside ``t_window = (t0, t1]``.

    Every event of ``cat`` before ``t1`` contributes to the intensity
    (history included); ``mu_at_events`` is aligned with ``cat``. The first
    event exactly at ``t0`` counts as inside when ``t0`` is the catalog start.
    """
    t0, t1 = map(float, t_window)
    m0 = cat.m0
    if t0 <= cat.window.t_range[0]:
        inside = (cat.t >= t0) & (cat.t <= t1)
    else:
        inside = (cat.t > t0) & (cat.t <= t1)
    idx = np.flatnonzero(inside)
    mu_at_events = np.asarray(mu_at_events, dtype=float)
    if pairs is None:
        pairs = PairTable(cat.t[idx], cat.xy[idx], cat.t, cat.xy, cat.m, m0)
    lam = mu_at_events[idx] + pairs.row_sums(pairs.phi(params))
    if np.any(~(lam > 0)):
        raise NonFiniteLikelihoodError("conditional intensity is not positive at an event")
    src = cat.t < t1
    start = np.maximum(cat.t[src], t0)
    kappa = productivity(cat.m[src], params, m0)
    comp = kappa * (omori_integral(t1 - cat.t[src], params.c, params.p)
                    - omori_integral(start - cat.t[src], params.c, params.p))
    ll = float(np.sum(np.log(lam)) - (t1 - t0) * mu_integral - np.sum(comp))
    if not np.isfinite(ll):
        raise NonFiniteLikelihoodError(f"log-likelihood is {ll}")
    return ll


def complete_data_log_likelihood(cat: Catalog, z, mu: BackgroundField, params: TriggeringParams,
                                 mu_integral: float | None = None) -> float:
    """Log-likelihood of the catalog jointly with a branching structure ``z``.

    ``z[i] = 0`` attributes event ``i`` to the background, ``z[i] = j``
    to event ``j - 1``. Summing ``exp`` of this over all valid ``z``
    recovers :func:`log_likelihood`.
    """
    z = np.asarray(z, dtype=np.int64)
    if len(z) != len(cat) or np.any(z < 0) or np.any(z > np.arange(len(cat))):
        raise DomainError("z must assign every event to the background or an earlier event")
    if mu_integral is None:
        mu_integral = mu.integral(cat.window)
    bg = z == 0
    child = np.flatnonzero(~bg)
    par = z[child] - 1
    if np.any(cat.t[par] >= cat.t[child]):
        return -np.inf
    dx = cat.xy[child] - cat.xy[par]
    ll = float(np.sum(np.log(mu(cat.xy[bg])))) if bg.any() else 0.0
    if len(child):
        ll += float(np.sum(log_triggering(cat.t[child] - cat.t[par], np.einsum("ij,ij->i", dx, dx),
                                          cat.m[par], params, cat.m0)))
    t1 = cat.window.t_range[1]
    comp = integrated_triggering(cat.t, cat.m, t1, params, cat.m0)
    return ll - cat.window.duration * mu_integral - float(np.sum(comp))
