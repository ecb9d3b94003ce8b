"""cltlab: a Monte Carlo laboratory for Gaussian-approximation rates.

The package simulates non-stationary martingale and weakly dependent sample
paths, measures exact one-dimensional Kolmogorov / Wasserstein distances of
their normalized sums to the standard normal, evaluates the matching
theoretical bound formulas term by term, and fits empirical convergence-rate
exponents against the predicted ones.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    CltLabError,
    ConfigurationError,
    DataFormatError,
    DomainError,
    QuadratureError,
)
from .numerics import SeedLineage

__all__ = [
    "CapabilityError",
    "CltLabError",
    "ConfigurationError",
    "DataFormatError",
    "DomainError",
    "QuadratureError",
    "SeedLineage",
    "__version__",
]
