"""Affine processes on the cone of positive semidefinite matrices.

Numerical toolkit for cone-valued affine Markov processes: parameter
validation, generalized Riccati flows, invariant laws with explicit
Wasserstein convergence rates, exact and thinning-based simulation,
and a stochastic-covariance forward curve model with transform pricing.
"""

from .errors import (
    AffineLabError,
    DomainBlowup,
    MajorantOverflow,
    NotSubcritical,
    NotValidated,
    PriceOutOfBounds,
    StepSizeUnderflow,
)

__version__ = "0.1.0"

__all__ = [
    "AffineLabError",
    "DomainBlowup",
    "MajorantOverflow",
    "NotSubcritical",
    "NotValidated",
    "PriceOutOfBounds",
    "StepSizeUnderflow",
    "__version__",
]
