"""Variance and success-probability estimates from finite sample sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "VarianceEstimate",
    "SuccessEstimate",
    "estimate_variance",
    "estimate_success",
    "wilson_interval",
    "bootstrap_variance_ci",
    "combined_stderr",
]

Z95 = 1.959963984540054
# quantum-noise-level drift over a full measurement run, shot-noise units
DRIFT_SNU = 0.02
# fixed: changing it changes the resampling stream
_BOOT_BATCH = 64


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    standard_error: float
    n_effective: int

    def __post_init__(self):
        if self.value < 0 or self.standard_error < 0:
            raise DomainError("variance and standard error must be non-negative")

    def within(self, target: float, k: float = 3.0, extra: float = 0.0) -> bool:
        """Whether ``target`` lies within ``k`` combined standard errors."""
        return abs(self.value - target) <= k * math.hypot(self.standard_error, extra)


@dataclass(frozen=True)
class SuccessEstimate:
    """Fraction of samples kept, with a Wilson 95% interval."""

    p: float
    ci_lo: float
    ci_hi: float
    kept: int
    total: int

    @property
    def binomial_stderr(self) -> float:
        return math.sqrt(max(self.p * (1.0 - self.p), 0.0) / self.total)


def estimate_variance(samples) -> VarianceEstimate:
    """Unbiased sample variance, stderr ``V * sqrt(2/(N-1))`` (Gaussian model).

    Sums are correctly rounded (``math.fsum``) so the result does not depend
    on sample order.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise DomainError(f"need at least 2 samples to estimate a variance, got {n}")
    mean = math.fsum(x) / n
    d = x - mean
    var = math.fsum(d * d) / (n - 1)
    return VarianceEstimate(var, var * math.sqrt(2.0 / (n - 1)), n)


def wilson_interval(kept: int, total: int, z: float = Z95) -> tuple[float, float]:
    if total < 1:
        raise DomainError("total must be >= 1")
    if not 0 <= kept <= total:
        raise DomainError(f"kept must lie in [0, {total}], got {kept}")
    p = kept / total
    z2 = z * z
    denom = 1.0 + z2 / total
    centre = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    lo = 0.0 if kept == 0 else max(0.0, centre - half)
    hi = 1.0 if kept == total else min(1.0, centre + half)
    return lo, hi


def estimate_success(kept: int, total: int) -> SuccessEstimate:
    """Post-selection success probability ``kept/total`` with a Wilson 95% interval."""
    if int(total) != total or total < 1:
        raise DomainError(f"total must be a positive count, got {total!r}")
    if int(kept) != kept:
        raise DomainError(f"kept must be a count, got {kept!r}")
    kept, total = int(kept), int(total)
    lo, hi = wilson_interval(kept, total)
    return SuccessEstimate(kept / total, lo, hi, kept, total)


def bootstrap_variance_ci(samples, resamples: int = 1000, seed: int = 0,
                          level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the sample variance, deterministic in ``seed``."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise DomainError(f"bootstrap needs at least 10 samples, got {n}")
    if resamples < 100:
        raise DomainError(f"bootstrap needs at least 100 resamples, got {resamples}")
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if np.all(x == x[0]):
        return 0.0, 0.0
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    stats = np.empty(resamples)
    for start in range(0, resamples, _BOOT_BATCH):
        stop = min(start + _BOOT_BATCH, resamples)
        idx = rng.integers(0, n, size=(stop - start, n))
        stats[start:stop] = np.var(x[idx], axis=1, ddof=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def combined_stderr(*errors: float) -> float:
    """Independent error contributions added in quadrature."""
    return math.sqrt(math.fsum(e * e for e in errors))
