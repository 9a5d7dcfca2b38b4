"""Augmented Gibbs sampler for GP-ETAS.

The background is ``mu(x) = lambda_bar * sigmoid(f(x))`` with a GP prior on
``f``. Augmenting with the branching structure ``z``, a latent Poisson
process ``Pi`` of thinned-away background candidates and Polya-gamma
variables ``omega`` makes every conditional except those of the GP
hyperparameters ``nu`` and the triggering parameters ``theta`` available in
closed form; the latter two are updated by log-space random-walk
Metropolis-Hastings.

One sweep updates, in order: z, Pi (with f at Pi), omega, lambda_bar, f,
nu, mu at the events, theta. New Pi points take f from the GP conditional
on the previous f at the events and the previous Pi points; conditioning on
the events alone would ignore what the old thinning revealed about f.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .catalog import Catalog, DomainWindow
from .errors import (ConfigError, DegenerateIntensityError, EmptyCatalogError, EtasError,
                     GibbsError, NumericalError)
from .gaussian_process import (DEFAULT_JITTER, GpFunctionValues, GpHyperParams, cholesky_jitter,
                               factorize, sample_predictive)
from .polya_gamma import sample_pg
from .triggering import (PARAM_NAMES, PairTable, TriggeringParams, integrated_triggering,
                         log_triggering, neutral_theta)

logger = logging.getLogger(__name__)

DEFAULT_THETA_BOUNDS = {"K0": (0.0, 10.0), "c": (0.0, 10.0), "p": (0.0, 10.0),
                        "alpha": (0.0, 10.0), "d": (0.0, 10.0), "gamma": (0.0, 10.0),
                        "q": (1.0, 10.0)}
DEFAULT_NU_RATES = (1.0 / 5.0, 5.0 / 2.0, 5.0 / 2.0)


# ------------------------------------------------------------------ priors

@dataclass(frozen=True)
class Priors:
    """Gamma prior (shape, rate) on lambda_bar, exponential rates on nu,
    uniform bounds on theta."""

    lambda_bar_gamma: tuple[float, float]
    nu_exponential_rates: tuple[float, float, float] = DEFAULT_NU_RATES
    theta_uniform_bounds: dict = field(default_factory=lambda: dict(DEFAULT_THETA_BOUNDS))

    def __post_init__(self):
        a0, b0 = map(float, self.lambda_bar_gamma)
        if not (a0 > 0 and b0 >= 0):
            raise ConfigError("lambda_bar prior needs shape > 0 and rate >= 0")
        object.__setattr__(self, "lambda_bar_gamma", (a0, b0))
        rates = tuple(float(r) for r in self.nu_exponential_rates)
        if len(rates) != 3 or min(rates) <= 0:
            raise ConfigError("nu prior rates must be three positive numbers")
        object.__setattr__(self, "nu_exponential_rates", rates)
        bounds = {n: tuple(map(float, self.theta_uniform_bounds[n])) for n in PARAM_NAMES}
        for n, (lo, hi) in bounds.items():
            if not (0 <= lo < hi) or not np.isfinite(hi):
                raise ConfigError(f"bad uniform bounds for {n}: {(lo, hi)}")
        if bounds["q"][0] < 1:
            raise ConfigError("lower bound of q must be at least 1")
        object.__setattr__(self, "theta_uniform_bounds", bounds)

    @classmethod
    def default(cls, cat: Catalog, c_s: float = 1.0, lambda_scale: str = "literal", **kw) -> "Priors":
        """Defaults with ``alpha0 = 1/c_s^2`` and ``beta0 = alpha0 / mu_lambda``.

        ``lambda_scale="literal"`` uses ``mu_lambda = 2 N |X|``; ``"rate"``
        uses the events-per-area-time scale ``2 N / (|X||T|)``.
        """
        return cls(lambda_prior(cat, c_s, lambda_scale), **kw)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.theta_uniform_bounds[n][0] for n in PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.theta_uniform_bounds[n][1] for n in PARAM_NAMES])

    def to_dict(self) -> dict:
        return {"lambda_bar_gamma": list(self.lambda_bar_gamma),
                "nu_exponential_rates": list(self.nu_exponential_rates),
                "theta_uniform_bounds": {n: list(v) for n, v in self.theta_uniform_bounds.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Priors":
        return cls(tuple(d["lambda_bar_gamma"]),
                   tuple(d.get("nu_exponential_rates", DEFAULT_NU_RATES)),
                   {**DEFAULT_THETA_BOUNDS, **d.get("theta_uniform_bounds", {})})


def lambda_prior(cat: Catalog, c_s: float = 1.0, scale: str = "literal") -> tuple[float, float]:
    w = cat.window
    n = max(len(cat), 1)
    if scale == "literal":
        mean = 2.0 * n * w.area
    elif scale == "rate":
        mean = 2.0 * n / (w.area * w.duration)
    else:
        raise ConfigError(f"unknown lambda_bar prior scale {scale!r}")
    a0 = 1.0 / c_s**2
    return a0, a0 / mean


# ------------------------------------------------------------------ state

@dataclass
class GibbsState:
    """Full augmented state. ``f`` lives at the events followed by ``pi_points``."""

    z: np.ndarray
    pi_points: np.ndarray
    omega: np.ndarray
    lambda_bar: float
    f: GpFunctionValues
    nu: GpHyperParams
    theta: TriggeringParams

    @property
    def n_events(self) -> int:
        return len(self.z)

    @property
    def f_events(self) -> np.ndarray:
        return self.f.values[: self.n_events]

    @property
    def f_pi(self) -> np.ndarray:
        return self.f.values[self.n_events:]

    def mu_at_events(self) -> np.ndarray:
        return self.lambda_bar * expit(self.f_events)

    def to_dict(self) -> dict:
        return {"z": self.z.tolist(), "pi_points": self.pi_points.tolist(),
                "omega": self.omega.tolist(), "lambda_bar": self.lambda_bar,
                "f_points": self.f.points.tolist(), "f_values": self.f.values.tolist(),
                "nu": self.nu.to_dict(), "theta": self.theta.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsState":
        return cls(z=np.asarray(d["z"], dtype=np.int64),
                   pi_points=np.asarray(d["pi_points"], dtype=float).reshape(-1, 2),
                   omega=np.asarray(d["omega"], dtype=float),
                   lambda_bar=float(d["lambda_bar"]),
                   f=GpFunctionValues(np.asarray(d["f_points"], dtype=float).reshape(-1, 2),
                                      np.asarray(d["f_values"], dtype=float)),
                   nu=GpHyperParams(**d["nu"]), theta=TriggeringParams.from_dict(d["theta"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "GibbsState":
        return cls.from_dict(json.loads(s))


@dataclass
class ChainSample:
    """Compact record of one retained state."""

    iteration: int
    lambda_bar: float
    nu: GpHyperParams
    theta: TriggeringParams
    n_background: int
    n_pi: int
    f_events: np.ndarray | None = None
    probe_mu: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "lambda_bar": self.lambda_bar,
                "nu": self.nu.to_dict(), "theta": self.theta.to_dict(),
                "n_background": self.n_background, "n_pi": self.n_pi,
                "f_events": None if self.f_events is None else self.f_events.tolist(),
                "probe_mu": None if self.probe_mu is None else self.probe_mu.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSample":
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls(int(d["iteration"]), float(d["lambda_bar"]), GpHyperParams(**d["nu"]),
                   TriggeringParams.from_dict(d["theta"]), int(d["n_background"]),
                   int(d["n_pi"]), arr(d.get("f_events")), arr(d.get("probe_mu")))


@dataclass
class PosteriorChain:
    samples: list
    burn_in: int
    thin: int
    seed: int
    acceptance_rates: dict = field(default_factory=dict)
    probe: dict | None = None

    def __len__(self):
        return len(self.samples)

    def theta_array(self) -> np.ndarray:
        return np.array([s.theta.as_array() for s in self.samples]).reshape(-1, len(PARAM_NAMES))

    def probe_samples(self) -> list:
        return [s for s in self.samples if s.probe_mu is not None]

    def summary(self, quantiles=(0.05, 0.5, 0.95)) -> dict:
        """Posterior median and 0.05 / 0.95 quantiles of theta, lambda_bar and nu."""
        if not self.samples:
            return {}
        cols = {n: self.theta_array()[:, k] for k, n in enumerate(PARAM_NAMES)}
        cols["lambda_bar"] = np.array([s.lambda_bar for s in self.samples])
        for k, n in enumerate(("nu0", "nu1", "nu2")):
            cols[n] = np.array([s.nu.as_array()[k] for s in self.samples])
        out = {}
        for n, v in cols.items():
            q = np.quantile(v, quantiles)
            out[n] = {"q05": float(q[0]), "median": float(q[1]), "q95": float(q[2])}
        return out

    def header(self) -> dict:
        return {"burn_in": self.burn_in, "thin": self.thin, "seed": self.seed,
                "acceptance_rates": self.acceptance_rates, "probe": self.probe,
                "n_samples": len(self.samples)}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for s in self.samples:
                fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "PosteriorChain":
        with open(path) as fh:
            head = json.loads(fh.readline())
            samples = [ChainSample.from_dict(json.loads(line)) for line in fh if line.strip()]
        return cls(samples, head["burn_in"], head["thin"], head["seed"],
                   head.get("acceptance_rates", {}), head.get("probe"))


@dataclass
class GibbsConfig:
    n_samples: int = 5000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    nu_proposal_sd: float = 0.05
    theta_proposal_sd: float = 0.01
    theta_steps: int = 10
    jitter: float = DEFAULT_JITTER
    probe_grid: tuple[int, int] | None = (50, 50)
    probe_thin: int = 10
    store_f: bool = True
    init_lambda_bar: float | None = None
    init_theta: TriggeringParams | str | None = None
    init_nu: GpHyperParams | None = None

    def __post_init__(self):
        if self.n_samples < 0 or self.burn_in < 0 or self.thin < 1 or self.probe_thin < 1:
            raise ConfigError("n_samples and burn_in must be >= 0, thin and probe_thin >= 1")
        if self.theta_steps < 0 or self.theta_proposal_sd < 0 or self.nu_proposal_sd < 0:
            raise ConfigError("MH settings must be nonnegative")


# ------------------------------------------------------------------ branching

@numba.njit(cache=True)
def _draw_parents(mu, phi, row_start, row_len, source, u):
    n = mu.shape[0]
    z = np.zeros(n, dtype=np.int64)
    for i in range(n):
        s = row_start[i]
        total = mu[i]
        for k in range(s, s + row_len[i]):
            total += phi[k]
        if not total > 0.0 or not np.isfinite(total):
            return z, i
        target = u[i] * total
        if target < mu[i]:
            continue
        acc = mu[i]
        pick = -1
        for k in range(s, s + row_len[i]):
            if phi[k] > 0.0:
                pick = k
            acc += phi[k]
            if target < acc and phi[k] > 0.0:
                break
        if pick < 0:
            continue
        k = pick
        z[i] = source[k] + 1
    return z, -1


def sample_branching(cat: Catalog, mu_at_events, theta: TriggeringParams,
                     rng: np.random.Generator, pairs: PairTable | None = None) -> np.ndarray:
    """Draw every z_i from its categorical conditional (0 = background)."""
    if pairs is None:
        pairs = PairTable.within(cat)
    mu = np.asarray(mu_at_events, dtype=float)
    phi = pairs.phi(theta) if len(pairs) else np.empty(0)
    u = rng.random(len(mu))
    z, bad = _draw_parents(mu, phi, pairs.row_start, pairs.row_len, pairs.source, u)
    if bad >= 0:
        raise DegenerateIntensityError(f"conditional intensity vanishes at event {bad}")
    return z


# ------------------------------------------------------------------ latent process

def sample_latent_pi(lambda_bar: float, f_state: GpFunctionValues, nu: GpHyperParams,
                     window: DomainWindow, rng: np.random.Generator,
                     jitter: float = DEFAULT_JITTER, factor=None):
    """Thinned-away background candidates and f there.

    Candidates are homogeneous at rate ``lambda_bar`` over space-time; f at
    the candidates is drawn from the GP conditional given ``f_state``; each
    candidate is kept with probability sigmoid(-f). Only locations are
    returned since the process is time-independent given f.
    """
    n = rng.poisson(lambda_bar * window.area * window.duration)
    xy = window.uniform_xy(n, rng)
    if n == 0:
        return xy, np.empty(0)
    f_c = sample_predictive(f_state, xy, nu, rng, jitter, factor)
    keep = rng.random(n) < expit(-f_c)
    return xy[keep], f_c[keep]


def sample_pg_variables(state: GibbsState, rng: np.random.Generator) -> np.ndarray:
    """omega ~ PG(1, |f|) at background events and Pi points, exactly 0 elsewhere."""
    active = np.concatenate([state.z == 0, np.ones(len(state.pi_points), dtype=bool)])
    omega = np.zeros(len(state.f))
    if active.any():
        omega[active] = sample_pg(np.abs(state.f.values[active]), rng)
    return omega


def sample_lambda_bar(n_bg_plus_pi: int, window: DomainWindow, priors: Priors,
                      rng: np.random.Generator) -> float:
    a0, b0 = priors.lambda_bar_gamma
    return float(rng.gamma(n_bg_plus_pi + a0, 1.0 / (window.area * window.duration + b0)))


# ------------------------------------------------------------------ f

def f_targets(z: np.ndarray, n_pi: int) -> np.ndarray:
    """The vector u: +1/2 at background events, 0 at triggered events, -1/2 at Pi."""
    return np.concatenate([np.where(z == 0, 0.5, 0.0), np.full(n_pi, -0.5)])


def gaussian_posterior_factor(L: np.ndarray, omega, u):
    """Mean and a square root of ``(Omega + K^-1)^-1`` given ``K = L L^T``.

    Uses ``(Omega + K^-1)^-1 = L B^-1 L^T`` with ``B = I + L^T Omega L``,
    so K is never inverted. Returns ``(mean, S)`` with covariance ``S S^T``.
    """
    omega = np.asarray(omega, dtype=float)
    B = np.eye(len(L)) + L.T @ (omega[:, None] * L)
    C = np.linalg.cholesky(0.5 * (B + B.T))
    w = solve_triangular(C, L.T @ u, lower=True)
    mean = L @ solve_triangular(C.T, w, lower=False)
    S = solve_triangular(C, L.T, lower=True).T
    return mean, S


def gaussian_posterior(K: np.ndarray, omega, u, jitter: float = 0.0):
    """Dense mean and covariance of f given omega and u (K is factorized, not inverted)."""
    _, L, _ = cholesky_jitter(np.asarray(K, dtype=float), float(np.max(np.diag(K))), jitter)
    mean, S = gaussian_posterior_factor(L, omega, u)
    return mean, S @ S.T


def sample_f(state: GibbsState, cat: Catalog, rng: np.random.Generator,
             jitter: float = DEFAULT_JITTER, factor=None) -> np.ndarray:
    """Draw f at the events and Pi points from its Gaussian conditional."""
    if factor is None:
        factor = factorize(state.f.points, state.nu, jitter)
    u = f_targets(state.z, len(state.pi_points))
    try:
        mean, S = gaussian_posterior_factor(factor.L, state.omega, u)
    except np.linalg.LinAlgError:
        raise NumericalError("factorization of the f posterior failed", state.to_dict()) from None
    return mean + S @ rng.standard_normal(len(u))


# ------------------------------------------------------------------ nu

def log_target_nu(f: GpFunctionValues, nu: GpHyperParams, priors: Priors,
                  jitter: float = DEFAULT_JITTER, factor=None):
    """``-1/2 f^T K^-1 f - 1/2 log det K + log p(nu)``; returns (value, factor).

    ``factor`` may pass the Gram factor at ``nu`` if already available.
    """
    rates = np.asarray(priors.nu_exponential_rates)
    if factor is None:
        factor = factorize(f.points, nu, jitter)
    a = solve_triangular(factor.L, f.values, lower=True)
    val = (-0.5 * a @ a - np.log(np.diag(factor.L)).sum()
           + float(np.sum(np.log(rates) - rates * nu.as_array())))
    return float(val), factor


def mh_hyperparameters(state: GibbsState, priors: Priors, proposal_sd: float,
                       rng: np.random.Generator, jitter: float = DEFAULT_JITTER,
                       factor=None):
    """One log-space random-walk MH step for nu.

    Returns ``(nu, accepted, factor)`` where ``factor`` is the Gram factor at
    the returned nu. ``factor`` may pass the Gram factor at the current nu.
    """
    cur_val, cur_factor = log_target_nu(state.f, state.nu, priors, jitter, factor)
    log_nu = np.log(state.nu.as_array())
    prop = log_nu + proposal_sd * rng.standard_normal(3)
    log_u = np.log(rng.random())
    try:
        new_nu = GpHyperParams.from_array(np.exp(prop))
        new_val, new_factor = log_target_nu(state.f, new_nu, priors, jitter)
    except (NumericalError, EtasError, FloatingPointError):
        return state.nu, False, cur_factor
    # log-space walk: Jacobian prod(nu)
    log_ratio = new_val + prop.sum() - cur_val - log_nu.sum()
    if log_u < log_ratio:
        return new_nu, True, new_factor
    return state.nu, False, cur_factor


# ------------------------------------------------------------------ theta

class BranchingData:
    """Per-catalog quantities reused by every theta evaluation."""

    def __init__(self, cat: Catalog):
        self.cat = cat
        self.t_end = cat.window.t_range[1]
        self.m0 = cat.m0

    def assigned(self, z):
        child = np.flatnonzero(z > 0)
        par = z[child] - 1
        dx = self.cat.xy[child] - self.cat.xy[par]
        return (self.cat.t[child] - self.cat.t[par], np.einsum("ij,ij->i", dx, dx),
                self.cat.m[par])


def log_likelihood_theta(theta: TriggeringParams, cat: Catalog, z, assigned=None) -> float:
    """Branching-conditioned triggering log-likelihood.

    Sum of log phi over (event, parent) pairs plus minus the expected
    offspring count of every event up to the window end.
    """
    z = np.asarray(z)
    if assigned is None:
        assigned = BranchingData(cat).assigned(z)
    dt, r2, m_par = assigned
    val = float(np.sum(log_triggering(dt, r2, m_par, theta, cat.m0))) if len(dt) else 0.0
    comp = integrated_triggering(cat.t, cat.m, cat.window.t_range[1], theta, cat.m0)
    return val - float(np.sum(comp))


def log_target_theta(theta: TriggeringParams, cat: Catalog, z, priors: Priors,
                     assigned=None) -> float:
    x = theta.as_array()
    if np.any(x <= priors.lower) or np.any(x >= priors.upper):
        return -np.inf
    return log_likelihood_theta(theta, cat, z, assigned)


def mh_triggering(state: GibbsState, cat: Catalog, priors: Priors, proposal_sd: float,
                  n_steps: int, rng: np.random.Generator, assigned=None):
    """``n_steps`` joint log-space random-walk MH steps for theta.

    Returns ``(theta, n_accepted)``.
    """
    if assigned is None:
        assigned = BranchingData(cat).assigned(state.z)
    theta = state.theta
    cur = log_target_theta(theta, cat, state.z, priors, assigned)
    x = np.log(theta.as_array())
    n_acc = 0
    lo, hi = priors.lower, priors.upper
    for _ in range(n_steps):
        prop = x + proposal_sd * rng.standard_normal(len(x))
        log_u = np.log(rng.random())
        vals = np.exp(prop)
        if np.any(vals <= lo) or np.any(vals >= hi):
            continue
        cand = TriggeringParams.from_array(vals)
        new = log_target_theta(cand, cat, state.z, priors, assigned)
        if log_u < new + prop.sum() - cur - x.sum():
            x, cur, theta = prop, new, cand
            n_acc += 1
    return theta, n_acc


# ------------------------------------------------------------------ prediction

def predictive_background(sample: GibbsState, x_star, rng: np.random.Generator,
                          jitter: float = DEFAULT_JITTER, factor=None) -> np.ndarray:
    """One draw of ``mu(x*) = lambda_bar * sigmoid(f*)`` with f* from the GP conditional."""
    f_star = sample_predictive(sample.f, x_star, sample.nu, rng, jitter, factor)
    return sample.lambda_bar * expit(f_star)


def summarize_background(mu_samples, quantiles=(0.05, 0.5, 0.95)) -> dict:
    """Pointwise quantiles of stacked background draws (samples along axis 0)."""
    q = np.quantile(np.asarray(mu_samples, dtype=float), quantiles, axis=0)
    return {"q05": q[0], "median": q[1], "q95": q[2]}


def probe_points(window: DomainWindow, nx: int, ny: int) -> np.ndarray:
    """Cell centers of an ``nx`` x ``ny`` grid, x-index major."""
    xs = window.x_range[0] + (np.arange(nx) + 0.5) * (window.x_range[1] - window.x_range[0]) / nx
    ys = window.y_range[0] + (np.arange(ny) + 0.5) * (window.y_range[1] - window.y_range[0]) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


# ------------------------------------------------------------------ driver

def sample_theta_prior(priors: Priors, rng: np.random.Generator) -> TriggeringParams:
    return TriggeringParams.from_array(rng.uniform(priors.lower, priors.upper))


class GibbsSampler:
    """Holds the chain state, rng and diagnostics; ``sweep`` advances one iteration."""

    def __init__(self, cat: Catalog, priors: Priors | None = None,
                 config: GibbsConfig | None = None, state: GibbsState | None = None,
                 rng: np.random.Generator | None = None):
        self.cat = cat
        self.priors = priors or Priors.default(cat)
        self.config = config or GibbsConfig()
        self.rng = rng if rng is not None else np.random.default_rng(self.config.seed)
        self.window = cat.window
        self.pairs = PairTable.within(cat)
        self.branching = BranchingData(cat)
        self.iteration = 0
        self.accepted = {"nu": 0, "theta": 0}
        self.proposed = {"nu": 0, "theta": 0}
        self.samples: list[ChainSample] = []
        self._factor = None
        self._factor_of = None
        self.probe_xy = None
        if self.config.probe_grid is not None:
            self.probe_xy = probe_points(self.window, *self.config.probe_grid)
        self.state = state if state is not None else self.initial_state()

    def initial_state(self) -> GibbsState:
        cfg, cat, rng = self.config, self.cat, self.rng
        n = len(cat)
        if n == 0:
            raise EmptyCatalogError("Gibbs sampling needs at least one event")
        if cfg.init_lambda_bar is not None:
            lam = float(cfg.init_lambda_bar)
        else:
            # prior shape with the mean put on the events-per-area-time scale
            a0 = self.priors.lambda_bar_gamma[0]
            mean = 2.0 * n / (self.window.area * self.window.duration)
            lam = float(rng.gamma(a0, mean / a0))
        if cfg.init_theta is None:
            theta = neutral_theta(self.window)
        elif isinstance(cfg.init_theta, str):
            if cfg.init_theta != "prior":
                raise ConfigError(f"unknown theta initialization {cfg.init_theta!r}")
            theta = sample_theta_prior(self.priors, rng)
        else:
            theta = cfg.init_theta
        if cfg.init_nu is not None:
            nu = cfg.init_nu
        else:
            nu = GpHyperParams.from_array(1.0 / np.asarray(self.priors.nu_exponential_rates))
        return GibbsState(z=np.zeros(n, dtype=np.int64), pi_points=np.empty((0, 2)),
                          omega=np.zeros(n), lambda_bar=lam,
                          f=GpFunctionValues(cat.xy.copy(), np.zeros(n)), nu=nu, theta=theta)

    def sweep(self) -> GibbsState:
        s, cat, rng, cfg = self.state, self.cat, self.rng, self.config
        try:
            mu = s.mu_at_events()
            z = sample_branching(cat, mu, s.theta, rng, self.pairs)
            # Pi candidates condition on f at the events and the old Pi points
            pi_xy, f_pi = sample_latent_pi(s.lambda_bar, s.f, s.nu, self.window, rng,
                                           cfg.jitter, self.state_factor())
            s = replace(s, z=z, pi_points=pi_xy,
                        f=GpFunctionValues(np.vstack([cat.xy, pi_xy]),
                                           np.concatenate([s.f_events, f_pi])))
            s.omega = sample_pg_variables(s, rng)
            s.lambda_bar = sample_lambda_bar(int(np.sum(z == 0)) + len(pi_xy), self.window,
                                             self.priors, rng)
            factor = factorize(s.f.points, s.nu, cfg.jitter)
            s.f = GpFunctionValues(s.f.points, sample_f(s, cat, rng, cfg.jitter, factor))
            nu, ok, factor = mh_hyperparameters(s, self.priors, cfg.nu_proposal_sd, rng,
                                                cfg.jitter, factor)
            self.proposed["nu"] += 1
            self.accepted["nu"] += int(ok)
            s.nu = nu
            self._factor, self._factor_of = factor, s.f
            theta, n_acc = mh_triggering(s, cat, self.priors, cfg.theta_proposal_sd,
                                         cfg.theta_steps, rng, self.branching.assigned(z))
            self.proposed["theta"] += cfg.theta_steps
            self.accepted["theta"] += n_acc
            s.theta = theta
        except GibbsError:
            raise
        except (EtasError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise GibbsError(f"sweep {self.iteration} failed: {exc}", self.iteration,
                             self.state.to_dict()) from exc
        self.state = s
        self.iteration += 1
        return s

    def state_factor(self):
        """Gram factor at the current f points and nu (cached across the sweep)."""
        s = self.state
        if self._factor_of is not s.f:
            self._factor = factorize(s.f.points, s.nu, self.config.jitter)
            self._factor_of = s.f
        return self._factor

    def acceptance_rates(self) -> dict:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else float("nan"))
                for k in self.accepted}

    def record(self, with_probe: bool) -> ChainSample:
        s = self.state
        probe = None
        if with_probe and self.probe_xy is not None:
            probe = predictive_background(s, self.probe_xy, self.rng, self.config.jitter,
                                          self.state_factor())
        return ChainSample(self.iteration, s.lambda_bar, s.nu, s.theta,
                           int(np.sum(s.z == 0)), len(s.pi_points),
                           s.f_events.copy() if self.config.store_f else None, probe)

    @property
    def n_sweeps(self) -> int:
        c = self.config
        return c.burn_in + c.n_samples * c.thin

    def run(self, callback=None, checkpoint=None, checkpoint_every: int = 0,
            stop_at: int | None = None) -> PosteriorChain:
        """Run until ``burn_in + n_samples * thin`` sweeps (or ``stop_at``) have been done.

        Resumes from ``self.iteration`` so a restored sampler continues the
        same chain. ``checkpoint(sampler)`` is called every
        ``checkpoint_every`` sweeps when given.
        """
        c = self.config
        stop = self.n_sweeps if stop_at is None else min(stop_at, self.n_sweeps)
        while self.iteration < stop:
            self.sweep()
            k = self.iteration - c.burn_in
            if k > 0 and k % c.thin == 0:
                idx = k // c.thin - 1
                sample = self.record(with_probe=idx % c.probe_thin == 0)
                self.samples.append(sample)
                if callback is not None:
                    callback(sample)
            if checkpoint is not None and checkpoint_every and self.iteration % checkpoint_every == 0:
                checkpoint(self)
        return self.chain()

    def chain(self) -> PosteriorChain:
        probe = None
        if self.config.probe_grid is not None:
            probe = {"window": self.window.to_dict(), "nx": self.config.probe_grid[0],
                     "ny": self.config.probe_grid[1]}
        return PosteriorChain(list(self.samples), self.config.burn_in, self.config.thin,
                              self.config.seed, self.acceptance_rates(), probe)

    # -------------------------------------------------------------- checkpoints

    def checkpoint_dict(self) -> dict:
        return {"iteration": self.iteration, "state": self.state.to_dict(),
                "rng": self.rng.bit_generator.state, "accepted": self.accepted,
                "proposed": self.proposed, "samples": [s.to_dict() for s in self.samples],
                "priors": self.priors.to_dict()}

    @classmethod
    def from_checkpoint(cls, cat: Catalog, d: dict, config: GibbsConfig) -> "GibbsSampler":
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng"]
        sampler = cls(cat, Priors.from_dict(d["priors"]), config,
                      GibbsState.from_dict(d["state"]), rng)
        sampler.iteration = int(d["iteration"])
        sampler.accepted = dict(d["accepted"])
        sampler.proposed = dict(d["proposed"])
        sampler.samples = [ChainSample.from_dict(s) for s in d["samples"]]
        return sampler


def run_gibbs(cat: Catalog, priors: Priors | None = None, config: GibbsConfig | None = None,
              callback=None) -> PosteriorChain:
    """Run a chain from scratch and return the retained samples."""
    sampler = GibbsSampler(cat, priors, config)
    chain = sampler.run(callback)
    logger.info("gibbs done: %d samples, acceptance %s", len(chain), chain.acceptance_rates)
    return chain
