"""Bayesian ETAS with a Gaussian-process background and a Polya-Gamma Gibbs sampler."""
__version__ = "0.1.0"

from .catalog import Catalog, DomainWindow, Event, load_catalog, split_catalog, write_catalog
from .errors import EtasError
from .gaussian_process import GpHyperParams
from .triggering import CASE1_THETA, TriggeringParams, case1_background, case2_background
from .simulator import SimConfig, simulate_catalog
from .gibbs import GibbsConfig, GibbsSampler, PosteriorChain, Priors, run_gibbs
from .baseline import KdeConfig, MleFit, em_fit
from .evaluation import EvalGrid, l2_background, test_log_likelihood_point, test_log_likelihood_posterior

__all__ = [
    "CASE1_THETA", "Catalog", "DomainWindow", "EtasError", "EvalGrid", "Event", "GibbsConfig",
    "GibbsSampler", "GpHyperParams", "KdeConfig", "MleFit", "PosteriorChain", "Priors", "SimConfig",
    "TriggeringParams", "case1_background", "case2_background", "em_fit", "l2_background",
    "load_catalog", "run_gibbs", "simulate_catalog", "split_catalog", "test_log_likelihood_point",
    "test_log_likelihood_posterior", "write_catalog",
]
