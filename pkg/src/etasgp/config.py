"""YAML run configuration: parsing, defaults and validation.

Relative paths are resolved against the directory of the config file.
Validation errors carry the dotted path of the offending field.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import yaml

from .baseline import KdeConfig
from .catalog import DomainWindow
from .errors import ConfigError, DomainError, InvalidParameterError
from .gaussian_process import GpHyperParams
from .gibbs import DEFAULT_NU_RATES, DEFAULT_THETA_BOUNDS, GibbsConfig, Priors, lambda_prior
from .simulator import LN10, SimConfig
from .triggering import (ConstantBackground, PiecewiseBackground, TriggeringParams,
                         case1_background, case2_background)

GIBBS_DEFAULTS = {"samples": 5000, "burn_in": 2000, "thin": 1, "probe_grid": [50, 50],
                  "probe_thin": 10, "nu_proposal_sd": 0.05, "theta_proposal_sd": 0.01,
                  "theta_steps": 10, "jitter": 1e-6, "checkpoint_every": 100}


class RunConfig:
    """A parsed config file; ``section(name)`` returns a command section."""

    def __init__(self, data: dict, path: Path | None = None, raw: bytes = b""):
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        self.data = data
        self.path = path
        self.base = path.parent if path is not None else Path.cwd()
        self.sha256 = hashlib.sha256(raw).hexdigest()

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = path.read_bytes()
        try:
            data = yaml.safe_load(raw) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: invalid YAML ({exc})") from None
        return cls(data, path, raw)

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {}) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: must be a mapping")
        return sec

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def seed(self, section: str, required: bool = True) -> int | None:
        sec = self.section(section)
        seed = sec.get("seed", self.data.get("seed"))
        if seed is None:
            if required:
                raise ConfigError(f"{section}.seed: a seed is required for reproducibility")
            return None
        return _int(seed, f"{section}.seed")

    def window(self, section: str | None = None) -> DomainWindow:
        sec = self.section(section) if section else {}
        w = sec.get("window", self.data.get("window"))
        where = f"{section}.window" if section and "window" in sec else "window"
        if not isinstance(w, dict):
            raise ConfigError(f"{where}: required mapping with x_range, y_range, t_range, m0")
        try:
            return DomainWindow.from_dict(w)
        except KeyError as exc:
            raise ConfigError(f"{where}.{exc.args[0]}: missing") from None
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return int(v)


def _float(v, where: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {v!r}") from None


def parse_theta(d, where: str) -> TriggeringParams:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping of triggering parameters")
    try:
        return TriggeringParams.from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}: missing") from None
    except (InvalidParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_background(d, where: str):
    """Background source: ``case1``, ``case2``, ``constant``, ``piecewise`` or ``gp``.

    Returns ``(field or None, nu or None, lambda_bar or None)``.
    """
    if isinstance(d, str):
        d = {"type": d}
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(f"{where}.type: required")
    kind = d["type"]
    lam = d.get("lambda_bar")
    lam = None if lam is None else _float(lam, f"{where}.lambda_bar")
    try:
        if kind == "case1":
            return case1_background(), None, lam
        if kind == "case2":
            return case2_background(), None, lam
        if kind == "constant":
            return ConstantBackground(_float(d.get("value"), f"{where}.value")), None, lam
        if kind == "piecewise":
            cells = [((c[0][0], c[0][1]), (c[1][0], c[1][1]), c[2]) for c in d.get("cells", [])]
            return PiecewiseBackground(cells, _float(d.get("default", 0.0), f"{where}.default")), None, lam
        if kind == "gp":
            nu = d.get("nu", {})
            if lam is None:
                raise ConfigError(f"{where}.lambda_bar: required for a GP background")
            return None, GpHyperParams(**{k: _float(nu.get(k), f"{where}.nu.{k}")
                                          for k in ("nu0", "nu1", "nu2")}), lam
    except (InvalidParameterError, TypeError, IndexError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.type: unknown background type {kind!r}")


def sim_config(cfg: RunConfig) -> SimConfig:
    sec = cfg.section("simulate")
    window = cfg.window("simulate")
    theta = parse_theta(sec.get("theta"), "simulate.theta")
    field, nu, lam = parse_background(sec.get("background"), "simulate.background")
    return SimConfig(window=window, theta=theta, lambda_bar=lam, background=field, nu=nu,
                     beta=_float(sec.get("beta", LN10), "simulate.beta"),
                     seed=cfg.seed("simulate"),
                     offspring_method=sec.get("offspring_method", "inversion"))


def priors_from(d: dict | None, cat, where: str = "fit_gp.priors") -> Priors:
    """Priors with Table-style defaults; every entry can be overridden."""
    d = d or {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: must be a mapping")
    if "lambda_bar_gamma" in d:
        lam = tuple(_float(v, f"{where}.lambda_bar_gamma") for v in d["lambda_bar_gamma"])
    else:
        lam = lambda_prior(cat, _float(d.get("c_s", 1.0), f"{where}.c_s"),
                           d.get("lambda_scale", "literal"))
    rates = tuple(_float(v, f"{where}.nu_rates") for v in d.get("nu_rates", DEFAULT_NU_RATES))
    bounds = dict(DEFAULT_THETA_BOUNDS)
    for k, v in (d.get("theta_bounds") or {}).items():
        if k not in bounds:
            raise ConfigError(f"{where}.theta_bounds.{k}: unknown parameter")
        bounds[k] = tuple(_float(x, f"{where}.theta_bounds.{k}") for x in v)
    return Priors(lam, rates, bounds)


def gibbs_config(sec: dict, seed: int) -> GibbsConfig:
    s = {**GIBBS_DEFAULTS, **sec}
    grid = s.get("probe_grid")
    init = s.get("init") or {}
    theta0 = init.get("theta")
    if isinstance(theta0, dict):
        theta0 = parse_theta(theta0, "fit_gp.init.theta")
    elif theta0 not in (None, "neutral", "prior"):
        raise ConfigError("fit_gp.init.theta: expected neutral, prior or a parameter mapping")
    if theta0 == "neutral":
        theta0 = None
    nu0 = init.get("nu")
    if nu0 is not None:
        nu0 = GpHyperParams(**{k: _float(nu0[k], f"fit_gp.init.nu.{k}") for k in ("nu0", "nu1", "nu2")})
    lam0 = init.get("lambda_bar")
    return GibbsConfig(
        n_samples=_int(s["samples"], "fit_gp.samples"), burn_in=_int(s["burn_in"], "fit_gp.burn_in"),
        thin=_int(s["thin"], "fit_gp.thin"), seed=seed,
        nu_proposal_sd=_float(s["nu_proposal_sd"], "fit_gp.nu_proposal_sd"),
        theta_proposal_sd=_float(s["theta_proposal_sd"], "fit_gp.theta_proposal_sd"),
        theta_steps=_int(s["theta_steps"], "fit_gp.theta_steps"),
        jitter=_float(s["jitter"], "fit_gp.jitter"),
        probe_grid=None if grid is None else (_int(grid[0], "fit_gp.probe_grid"),
                                              _int(grid[1], "fit_gp.probe_grid")),
        probe_thin=_int(s["probe_thin"], "fit_gp.probe_thin"),
        init_lambda_bar=None if lam0 is None else _float(lam0, "fit_gp.init.lambda_bar"),
        init_theta=theta0, init_nu=nu0)


def kde_config(sec: dict) -> KdeConfig:
    return KdeConfig(n_p=_int(sec.get("n_p", 15), "fit_mle.n_p"),
                     d_min=_float(sec.get("d_min", 0.05), "fit_mle.d_min"),
                     variant=sec.get("variant", "classical"))


def load_yaml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
