"""Simulation and analysis of SGD-like diffusions with state-dependent, power-law noise."""

from .dynamics import IntegratorConfig, Mode, Trajectory, run, run_ensemble
from .escape import (
    EscapeProblem1D,
    EscapeProblemMulti,
    FirstPassageStats,
    mc_first_passage,
    success_rate,
    tau_alpha_stable_1d,
    tau_langevin_1d,
    tau_power_law_1d,
    tau_power_law_multi,
)
from .landscape import DoubleWell1D, EmpiricalToyLoss, QuadraticBasin
from .noise_model import MultivariateNoiseParams, NoiseScanResult, ScalarNoiseParams
from .pacbayes import BoundInputs, generalization_bound, kl_exact_form, kl_upper_bound
from .stationary import FullStationary1D, PowerLawKappa1D, PowerLawKappaMulti
from .tailfit import TailFitResult, fit_power_law_kappa, ks_distance

__version__ = "0.1.0"

__all__ = [
    "BoundInputs", "DoubleWell1D", "EmpiricalToyLoss", "EscapeProblem1D", "EscapeProblemMulti",
    "FirstPassageStats", "FullStationary1D", "IntegratorConfig", "Mode", "MultivariateNoiseParams",
    "NoiseScanResult", "PowerLawKappa1D", "PowerLawKappaMulti", "QuadraticBasin", "ScalarNoiseParams",
    "TailFitResult", "Trajectory", "fit_power_law_kappa", "generalization_bound", "kl_exact_form",
    "kl_upper_bound", "ks_distance", "mc_first_passage", "run", "run_ensemble", "success_rate",
    "tau_alpha_stable_1d", "tau_langevin_1d", "tau_power_law_1d", "tau_power_law_multi",
]
