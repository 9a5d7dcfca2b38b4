"""Command-line entry point: ``etasgp {simulate,fit-gp,fit-mle,evaluate}``.

Every command reads a YAML config, writes its outputs plus a
``manifest.json`` into an output directory and exits with 0 on success,
2 on configuration or input errors and 3 on numerical failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import MleFit, em_fit
from .catalog import load_catalog, split_catalog, write_catalog
from .config import RunConfig, gibbs_config, kde_config, load_yaml, priors_from, sim_config
from .errors import (CatalogParseError, ConfigError, DomainError, EmptyCatalogError, EtasError,
                     GibbsError, InvalidParameterError)
from .evaluation import (EvalGrid, period_report, test_log_likelihood_point,
                         test_log_likelihood_posterior)
from .gibbs import GibbsSampler, PosteriorChain
from .simulator import simulate_catalog

logger = logging.getLogger("etasgp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
CONFIG_ERRORS = (ConfigError, DomainError, CatalogParseError, EmptyCatalogError,
                 InvalidParameterError, FileNotFoundError, IsADirectoryError)


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, seed, inputs, outputs) -> None:
    import numba
    import scipy
    import yaml
    manifest = {
        "command": command, "config_sha256": cfg.sha256, "seed": seed,
        "inputs": {p.name: _sha(p) for p in inputs},
        "outputs": {p.name: _sha(p) for p in outputs},
        "versions": {"etasgp": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "pyyaml": yaml.__version__},
    }
    _dump(manifest, out / "manifest.json")


def _out_dir(args, cfg: RunConfig, section: str) -> Path:
    out = args.out or cfg.section(section).get("output_dir")
    if out is None:
        raise ConfigError(f"{section}.output_dir: required (or pass --out)")
    out = Path(out) if args.out else cfg.resolve(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _catalog(cfg: RunConfig, section: str, key: str = "catalog", required: bool = True):
    """Load ``<section>.<key>`` in the section (or top-level) window."""
    sec = cfg.section(section)
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key}: required path to a t,x,y,m CSV file")
        return None, None
    path = cfg.resolve(sec[key])
    if not path.is_file():
        raise FileNotFoundError(f"{section}.{key}: no such file {path}")
    return load_catalog(path, cfg.window(section)), path


def _split_time(cfg: RunConfig, section: str):
    t = cfg.section(section).get("split_time")
    if t is None:
        return None
    try:
        return float(t)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.split_time: expected a number, got {t!r}") from None


def _training_catalog(cfg: RunConfig, section: str):
    """The fit catalog, cut at ``<section>.split_time`` when given."""
    cat, path = _catalog(cfg, section)
    t = _split_time(cfg, section)
    if t is not None:
        cat = split_catalog(cat, t)[0]
    return cat, path


# ------------------------------------------------------------------ commands

def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = sim_config(cfg)
    if args.seed is not None:
        sim.seed = args.seed
    out = _out_dir(args, cfg, "simulate")
    cat = simulate_catalog(sim)
    cat_path, truth_path = out / "catalog.csv", out / "truth.json"
    write_catalog(cat, cat_path)
    truth = {"seed": sim.seed, "theta": sim.theta.to_dict(), "beta": sim.beta,
             "window": sim.window.to_dict(), "lambda_bar": sim.lambda_bar,
             "background": cfg.section("simulate").get("background"),
             "n_events": len(cat), "n_background": int(np.sum(cat.z == 0)),
             "z": cat.z.tolist()}
    _dump(truth, truth_path)
    write_manifest(out, "simulate", cfg, sim.seed, [], [cat_path, truth_path])
    print(f"simulated {len(cat)} events ({truth['n_background']} background) -> {cat_path}")
    return EXIT_OK


def cmd_fit_gp(args, cfg: RunConfig) -> int:
    sec = dict(cfg.section("fit_gp"))
    for key, val in (("samples", args.samples), ("burn_in", args.burn_in), ("thin", args.thin),
                     ("probe_grid", args.probe_grid)):
        if val is not None:
            sec[key] = val
    seed = args.seed if args.seed is not None else cfg.seed("fit_gp")
    cat, cat_path = _training_catalog(cfg, "fit_gp")
    priors_d = load_yaml(args.priors) if args.priors else sec.get("priors")
    if args.priors and isinstance(priors_d, dict) and "priors" in priors_d:
        priors_d = priors_d["priors"]
    priors = priors_from(priors_d, cat)
    gcfg = gibbs_config(sec, seed)
    out = _out_dir(args, cfg, "fit_gp")
    ckpt_path = out / "checkpoint.json"
    every = int(sec.get("checkpoint_every", 100))

    def save(sampler):
        tmp = ckpt_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(sampler.checkpoint_dict(), sort_keys=True))
        tmp.replace(ckpt_path)

    if args.resume:
        if not ckpt_path.is_file():
            raise ConfigError(f"--resume: no checkpoint at {ckpt_path}")
        sampler = GibbsSampler.from_checkpoint(cat, json.loads(ckpt_path.read_text()), gcfg)
    else:
        sampler = GibbsSampler(cat, priors, gcfg)
    stop = None if args.stop_after is None else sampler.iteration + args.stop_after
    try:
        sampler.run(checkpoint=save, checkpoint_every=every, stop_at=stop)
    except GibbsError:
        save(sampler)
        raise
    if sampler.iteration < sampler.n_sweeps:
        save(sampler)
        print(f"stopped after sweep {sampler.iteration} of {sampler.n_sweeps}; checkpoint {ckpt_path}")
        return EXIT_OK
    chain = sampler.chain()
    chain_path, summary_path = out / "chain.jsonl", out / "summary.json"
    chain.write_jsonl(chain_path)
    summary = {"n_samples": len(chain), "n_events": len(cat), "burn_in": chain.burn_in,
               "thin": chain.thin, "seed": seed, "acceptance_rates": chain.acceptance_rates,
               "quantiles": chain.summary(), "priors": sampler.priors.to_dict()}
    _dump(summary, summary_path)
    save(sampler)
    write_manifest(out, "fit-gp", cfg, seed, [cat_path], [chain_path, summary_path])
    print(f"fit-gp: {len(chain)} samples written to {chain_path}")
    return EXIT_OK


def cmd_fit_mle(args, cfg: RunConfig) -> int:
    sec = dict(cfg.section("fit_mle"))
    if args.variant is not None:
        sec["variant"] = args.variant
    cat, cat_path = _training_catalog(cfg, "fit_mle")
    kcfg = kde_config(sec)
    fit = em_fit(cat, kcfg, tol=float(sec.get("tol", 1e-6)), max_iter=int(sec.get("max_iter", 200)))
    out = _out_dir(args, cfg, "fit_mle")
    fit_path, grid_path = out / "fit.json", out / "mu_grid.csv"
    _dump(fit.to_dict(), fit_path)
    nx, ny = sec.get("grid", [50, 50])
    grid = EvalGrid(cat.window, int(nx), int(ny))
    xy = grid.centers
    mu = fit.mu_kde(xy)
    with grid_path.open("w") as fh:
        fh.write("x,y,mu\n")
        for (x, y), v in zip(xy, mu):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")
    write_manifest(out, "fit-mle", cfg, None, [cat_path], [fit_path, grid_path])
    print(f"fit-mle ({kcfg.variant}): theta = {fit.theta.to_dict()}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    sec = cfg.section("evaluate")
    test, test_path = _catalog(cfg, "evaluate", "test_catalog")
    history, hist_path = _catalog(cfg, "evaluate", "history_catalog", required=False)
    t = _split_time(cfg, "evaluate")
    if t is not None:
        if history is not None:
            raise ConfigError("evaluate: give either history_catalog or split_time, not both")
        history, test = split_catalog(test, t)
    if "model" not in sec:
        raise ConfigError("evaluate.model: required path to chain.jsonl or fit.json")
    model_path = cfg.resolve(sec["model"])
    if not model_path.is_file():
        raise FileNotFoundError(f"evaluate.model: no such file {model_path}")
    nx, ny = sec.get("grid", [50, 50])
    grid = EvalGrid(test.window, int(nx), int(ny))
    if model_path.suffix == ".jsonl":
        chain = PosteriorChain.read_jsonl(model_path)
        score = lambda te, hi, tw: test_log_likelihood_posterior(chain, te, hi, grid, tw)  # noqa: E731
        kind = "gp"
    else:
        fit = MleFit.from_dict(json.loads(model_path.read_text()))
        score = lambda te, hi, tw: test_log_likelihood_point((fit.mu_kde, fit.theta), te, hi, grid, tw)  # noqa: E731
        kind = "mle"
    report = {"model": kind, **period_report(score, test, history)}
    out = _out_dir(args, cfg, "evaluate")
    rep_path = out / "report.json"
    _dump(report, rep_path)
    inputs = [p for p in (test_path, hist_path, model_path) if p is not None]
    write_manifest(out, "evaluate", cfg, None, inputs, [rep_path])
    print(f"evaluate: l_test = {report['l_test']:.4f} over {report['n_test']} events")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit-gp": cmd_fit_gp, "fit-mle": cmd_fit_mle,
            "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etasgp", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides <section>.output_dir)")
        p.add_argument("--seed", type=int)
        if name == "fit-gp":
            p.add_argument("--samples", type=int)
            p.add_argument("--burn-in", type=int)
            p.add_argument("--thin", type=int)
            p.add_argument("--probe-grid", type=int, nargs=2, metavar=("NX", "NY"))
            p.add_argument("--priors", help="YAML file with a priors mapping")
            p.add_argument("--resume", action="store_true", help="continue from checkpoint.json")
            p.add_argument("--stop-after", type=int, help="stop after this many sweeps")
        if name == "fit-mle":
            p.add_argument("--variant", choices=["classical", "silverman"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](args, cfg)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EtasError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
