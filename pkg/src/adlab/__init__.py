"""Numerical laboratory for slowly driven quantum systems and their inverse-evolving duals."""

from . import conditions, evolve, grid, linalg, models, perturb, spectral
from .conditions import ConditionReport, traditional_condition, ye_condition, ye_condition_dual_form
from .errors import AdlabError, ScenarioError
from .evolve import PropagatorTrace, propagate
from .models import DrivenHamiltonian, GridHamiltonian, RotatingSpinParams, build_dual
from .perturb import first_order
from .spectral import SpectralPath, parallel_path

__version__ = "0.1.0"

__all__ = [
    "AdlabError",
    "ConditionReport",
    "DrivenHamiltonian",
    "GridHamiltonian",
    "PropagatorTrace",
    "RotatingSpinParams",
    "ScenarioError",
    "SpectralPath",
    "build_dual",
    "conditions",
    "evolve",
    "first_order",
    "grid",
    "linalg",
    "models",
    "parallel_path",
    "perturb",
    "propagate",
    "spectral",
    "traditional_condition",
    "ye_condition",
    "ye_condition_dual_form",
]
