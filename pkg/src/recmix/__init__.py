"""Recursive (predictive-recursion) estimation of mixing densities, with
permutation averaging, a Dirichlet-process importance sampler and a grid
NPML baseline."""

from ._loops import BACKEND
from .evalx import MetricsReport, XScale, bias_spread, kl_divergence, l1_distance, rate_fit
from .kernels import GammaRate, Normal, Poisson, loglik_curve, marginal_density, posterior_reweight
from .measure import (DegenerateDensity, Density, DominatingMeasure, integrate, make_measure,
                      mix_atom_mass, normalize)
from .npb import DPConfig, enumerate_exact, ess, npb_estimate, sis_pass
from .npml import npml_fit
from .recursion import WeightSchedule, iterate_average, pare_exact, pare_run, re_run, re_update
from .simgen import Scenario, gen, ordered_counts, scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "MetricsReport", "XScale", "bias_spread", "kl_divergence", "l1_distance",
    "rate_fit", "GammaRate", "Normal", "Poisson", "loglik_curve", "marginal_density",
    "posterior_reweight", "DegenerateDensity", "Density", "DominatingMeasure", "integrate",
    "make_measure", "mix_atom_mass", "normalize", "DPConfig", "enumerate_exact", "ess",
    "npb_estimate", "sis_pass", "npml_fit", "WeightSchedule", "iterate_average", "pare_exact",
    "pare_run", "re_run", "re_update", "Scenario", "gen", "ordered_counts", "scenario",
]
