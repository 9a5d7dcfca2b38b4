"""Squared-exponential Gaussian process: Gram matrices, prior and conditional draws."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InvalidParameterError, NumericalError

DEFAULT_JITTER = 1e-6
MAX_JITTER = 1e-3


@dataclass(frozen=True)
class GpHyperParams:
    """Amplitude ``nu0`` and per-axis length scales ``nu1``, ``nu2``."""

    nu0: float
    nu1: float
    nu2: float

    def __post_init__(self):
        for name in ("nu0", "nu1", "nu2"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.nu0, self.nu1, self.nu2])

    @classmethod
    def from_array(cls, a) -> "GpHyperParams":
        return cls(*map(float, a))

    def to_dict(self) -> dict:
        return {"nu0": self.nu0, "nu1": self.nu1, "nu2": self.nu2}


@dataclass
class GpFunctionValues:
    """Function values ``values`` at locations ``points`` (shape (J, 2))."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.points) != len(self.values):
            raise ValueError("points and values must align")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("function values must be finite")

    def __len__(self):
        return len(self.values)


class GramFactor(NamedTuple):
    K: np.ndarray
    L: np.ndarray
    jitter: float


def covariance(x, x2, nu: GpHyperParams):
    """Kernel value ``nu0 exp(-dx1^2/(2 nu1^2)) exp(-dx2^2/(2 nu2^2))``.

    Broadcasts over leading dimensions of ``x`` and ``x2``.
    """
    d = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return nu.nu0 * np.exp(-0.5 * (d[..., 0] / nu.nu1) ** 2 - 0.5 * (d[..., 1] / nu.nu2) ** 2)


def cross_covariance(a, b, nu: GpHyperParams) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2) / [nu.nu1, nu.nu2]
    b = np.asarray(b, dtype=float).reshape(-1, 2) / [nu.nu1, nu.nu2]
    sq = ((a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T)
    return nu.nu0 * np.exp(-0.5 * np.maximum(sq, 0.0))


def cholesky_jitter(C: np.ndarray, scale: float, jitter: float = DEFAULT_JITTER,
                    max_jitter: float = MAX_JITTER) -> tuple[np.ndarray, np.ndarray, float]:
    """Cholesky of ``C + jitter * scale * I``, escalating jitter x10 on failure.

    Returns ``(C_jittered, L, jitter_used)``. With ``jitter == 0`` no
    escalation is attempted.
    """
    n = len(C)
    eye = np.eye(n)
    j = float(jitter)
    while True:
        Cj = C + j * scale * eye if j > 0 else C
        try:
            return Cj, np.linalg.cholesky(Cj), j
        except np.linalg.LinAlgError:
            if j <= 0 or j * 10 > max_jitter * (1 + 1e-12):
                raise NumericalError(
                    f"Cholesky failed for a {n}x{n} matrix with jitter {j:g}") from None
            j *= 10


def factorize(points, nu: GpHyperParams, jitter: float = DEFAULT_JITTER) -> GramFactor:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return GramFactor(np.empty((0, 0)), np.empty((0, 0)), float(jitter))
    K, L, j = cholesky_jitter(cross_covariance(points, points, nu), nu.nu0, jitter)
    return GramFactor(K, L, j)


def gram_matrix(points, nu: GpHyperParams, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Covariance matrix with ``jitter * nu0`` on the diagonal (verified PD)."""
    return factorize(points, nu, jitter).K


def sample_prior(points, nu: GpHyperParams, rng: np.random.Generator,
                 jitter: float = DEFAULT_JITTER) -> GpFunctionValues:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return GpFunctionValues(points, np.empty(0))
    L = factorize(points, nu, jitter).L
    return GpFunctionValues(points, L @ rng.standard_normal(len(points)))


def predictive_conditional(f_obs: GpFunctionValues, x_star, nu: GpHyperParams,
                           jitter: float = DEFAULT_JITTER, factor: GramFactor | None = None):
    """Mean and covariance of f at ``x_star`` given ``f_obs``.

    ``factor`` may pass a precomputed factorization of the observed Gram
    matrix. The covariance is symmetrized.
    """
    if len(f_obs) == 0:
        raise ValueError("f_obs must be non-empty")
    x_star = np.asarray(x_star, dtype=float).reshape(-1, 2)
    if factor is None:
        factor = factorize(f_obs.points, nu, jitter)
    Ksf = cross_covariance(x_star, f_obs.points, nu)
    mean = Ksf @ cho_solve((factor.L, True), f_obs.values)
    V = solve_triangular(factor.L, Ksf.T, lower=True)
    cov = cross_covariance(x_star, x_star, nu) - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def sample_predictive(f_obs: GpFunctionValues, x_star, nu: GpHyperParams,
                      rng: np.random.Generator, jitter: float = DEFAULT_JITTER,
                      factor: GramFactor | None = None) -> np.ndarray:
    """Joint draw of f at ``x_star`` given ``f_obs`` (prior draw if empty)."""
    x_star = np.asarray(x_star, dtype=float).reshape(-1, 2)
    if len(x_star) == 0:
        return np.empty(0)
    if len(f_obs) == 0:
        return sample_prior(x_star, nu, rng, jitter).values
    mean, cov = predictive_conditional(f_obs, x_star, nu, jitter, factor)
    _, L, _ = cholesky_jitter(cov, nu.nu0, jitter)
    return mean + L @ rng.standard_normal(len(x_star))
