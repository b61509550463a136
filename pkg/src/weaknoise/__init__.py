"""Weak-noise quasipotentials, exit rates and exit-point densities for planar SDEs.

dx = a(x) dt + sqrt(2 eps D(x)) dW with polynomial drift and diffusion.  The
quasipotential phi is computed by planar characteristics of a generating
function chi (psi = 1/chi for singular diffusion); exit quantities follow from
boundary-layer analysis of the exit function.
"""
from .equilibrium import EquilibriumAnalysis, analyze_all, analyze_equilibrium, find_equilibria
from .errors import (ChiUndeterminedError, ConvergenceError, DomainError, MaskError, ModelError,
                     NotAttractedError, NotSaddleError, NumericalError, StiffnessAbort,
                     TangencyError, ValidationError, WeakNoiseError)
from .model import SdeModel, builtin, load_model

__version__ = "0.1.0"

__all__ = [
    "SdeModel", "builtin", "load_model",
    "EquilibriumAnalysis", "analyze_all", "analyze_equilibrium", "find_equilibria",
    "WeakNoiseError", "ValidationError", "NumericalError", "ModelError", "DomainError",
    "NotSaddleError", "NotAttractedError", "TangencyError", "MaskError",
    "ChiUndeterminedError", "ConvergenceError", "StiffnessAbort",
    "__version__",
]
