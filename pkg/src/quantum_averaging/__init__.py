"""Arithmetic and harmonic averaging of squeezed-state quadrature variances."""

__version__ = "0.1.0"

from .errors import DomainError, StarvedSelectionError, UnsupportedConfigurationError  # noqa: E402
from .means import (  # noqa: E402
    CorrelatedPair,
    VarianceSet,
    arithmetic_mean,
    arithmetic_mean_correlated,
    geometric_mean,
    harmonic_mean,
    harmonic_mean_correlated,
    power_mean,
    stabilization_table,
)

__all__ = [
    "__version__",
    "DomainError",
    "StarvedSelectionError",
    "UnsupportedConfigurationError",
    "CorrelatedPair",
    "VarianceSet",
    "arithmetic_mean",
    "arithmetic_mean_correlated",
    "geometric_mean",
    "harmonic_mean",
    "harmonic_mean_correlated",
    "power_mean",
    "stabilization_table",
]
