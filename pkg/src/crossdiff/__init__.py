"""Regularized cross-diffusion competition model: Turing threshold, weakly
nonlinear amplitude prediction and a P1 finite element solver."""

from .model import (
    HypothesisError,
    ModelParams,
    builtin_example,
    coexistence_equilibrium,
    load_config,
    save_config,
    validate_hypotheses,
)
from .stability import StabilityReport, critical_pair, dispersion, growth_rate, marginal_delta
from .wna import WnaExpansion, amplitude_at, expand, limit_diagnostics, stationary_profile

__all__ = [
    "HypothesisError",
    "ModelParams",
    "builtin_example",
    "coexistence_equilibrium",
    "load_config",
    "save_config",
    "validate_hypotheses",
    "StabilityReport",
    "critical_pair",
    "dispersion",
    "growth_rate",
    "marginal_delta",
    "WnaExpansion",
    "amplitude_at",
    "expand",
    "limit_diagnostics",
    "stationary_profile",
]

__version__ = "0.1.0"
