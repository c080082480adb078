"""auxtrain: least-squares network training via auxiliary-variable penalty
formulations with alternating closed-form block updates."""

from . import fnn, fnn_solvers, harness, linalg, pinn, pinn_solvers, rng, sampling
from .errors import (
    NumericError,
    ShapeError,
    SolverDivergence,
    UnsupportedActivationError,
    UnsupportedDimensionError,
)

__version__ = "0.1.0"

__all__ = [
    "fnn",
    "fnn_solvers",
    "harness",
    "linalg",
    "pinn",
    "pinn_solvers",
    "rng",
    "sampling",
    "NumericError",
    "ShapeError",
    "SolverDivergence",
    "UnsupportedActivationError",
    "UnsupportedDimensionError",
    "__version__",
]
