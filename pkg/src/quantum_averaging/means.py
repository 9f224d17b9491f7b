"""Closed-form mean algebra for quadrature variances.

All variances are in shot-noise units: the vacuum variance is 1, values
below 1 are squeezed and values above 1 are super-Poissonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DomainError

__all__ = [
    "VarianceSet",
    "CorrelatedPair",
    "power_mean",
    "geometric_mean",
    "arithmetic_mean",
    "harmonic_mean",
    "arithmetic_mean_correlated",
    "harmonic_mean_correlated",
    "stabilization_table",
]


@dataclass(frozen=True)
class VarianceSet:
    """Per-resource amplitude-quadrature variances."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise DomainError("a variance set needs at least one resource")
        for v in vals:
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"variances must be finite and strictly positive, got {v!r}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def of(cls, x: "VarianceLike") -> "VarianceSet":
        if isinstance(x, VarianceSet):
            return x
        if isinstance(x, (int, float)):
            return cls((float(x),))
        return cls(tuple(x))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


VarianceLike = Union[VarianceSet, Sequence[float], Iterable[float]]


@dataclass(frozen=True)
class CorrelatedPair:
    """Two resources with amplitude-quadrature correlation ``c = <X1 X2>``."""

    v1: float
    v2: float
    c: float = 0.0

    def __post_init__(self):
        for name in ("v1", "v2"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be finite and strictly positive, got {v!r}")
            object.__setattr__(self, name, v)
        c = float(self.c)
        if not math.isfinite(c):
            raise DomainError(f"correlation must be finite, got {c!r}")
        if c * c > self.v1 * self.v2:
            raise DomainError(
                f"correlation {c!r} violates the positivity bound c^2 <= v1*v2 "
                f"(|c| <= {math.sqrt(self.v1 * self.v2):.6g})"
            )
        object.__setattr__(self, "c", c)

    @property
    def strictly_positive_definite(self) -> bool:
        return self.c * self.c < self.v1 * self.v2 * (1.0 - 1e-12)

    def covariance(self) -> np.ndarray:
        return np.array([[self.v1, self.c], [self.c, self.v2]])


def power_mean(x: VarianceLike, r: int) -> float:
    """Generalized mean ``((1/n) sum x_i**r) ** (1/r)``.

    ``r = 0`` returns the geometric mean, the limit of the expression as
    ``r -> 0``. The sum is rescaled by the extreme entry before raising to
    ``r`` so large ``|r|`` neither overflows nor underflows.
    """
    if not isinstance(r, (int, np.integer)) or isinstance(r, bool):
        raise DomainError(f"exponent must be an integer, got {r!r}")
    arr = VarianceSet.of(x).as_array()
    lo, hi = arr.min(), arr.max()
    if r == 0:
        out = float(np.exp(np.mean(np.log(arr))))
    else:
        scale = hi if r > 0 else lo
        out = float(np.mean((arr / scale) ** int(r)) ** (1.0 / int(r)) * scale)
    # rounding can push the value a few ulps outside [min, max]
    return float(min(max(out, lo), hi))


def geometric_mean(x: VarianceLike) -> float:
    return power_mean(x, 0)


def arithmetic_mean(x: VarianceLike) -> float:
    """Output variance of the random-pick and interference protocols."""
    return power_mean(x, 1)


def harmonic_mean(x: VarianceLike) -> float:
    """Output variance of the narrow-window heralded and feedforward protocols."""
    return power_mean(x, -1)


def arithmetic_mean_correlated(p: CorrelatedPair) -> float:
    """Variance of the destructive port of a balanced splitter: ``(v1+v2)/2 - c``."""
    if not p.strictly_positive_definite:
        raise DomainError(
            f"maximally correlated pair is degenerate; need c^2 < v1*v2 (v1={p.v1}, v2={p.v2}, c={p.c})"
        )
    return (p.v1 + p.v2) / 2.0 - p.c


def harmonic_mean_correlated(p: CorrelatedPair) -> float:
    """Narrow-window heralded variance for a correlated pair.

    Equals ``2 (v1 v2 - c^2) / (v1 + v2 + 2c)``; the trigger is the port with
    variance ``(v1+v2)/2 + c``.
    """
    if not p.strictly_positive_definite:
        raise DomainError(
            f"conditioning needs c^2 < v1*v2 strictly; got v1={p.v1}, v2={p.v2}, c={p.c}"
        )
    denom = p.v1 + p.v2 + 2.0 * p.c
    if denom <= 0:
        raise DomainError(f"trigger-port variance vanishes (v1+v2+2c = {denom!r})")
    return 2.0 * (p.v1 * p.v2 - p.c * p.c) / denom


def stabilization_table(n_total: int, n_broken: int, v_quiet: float, v_broken: float) -> tuple[float, float]:
    """Arithmetic and harmonic means of ``n_broken`` broken and the remaining quiet sources.

    Returns
    -------
    (V_A, V_H)
    """
    if n_total < 1:
        raise DomainError(f"n_total must be >= 1, got {n_total}")
    if not 0 <= n_broken <= n_total:
        raise DomainError(f"n_broken must lie in [0, {n_total}], got {n_broken}")
    values = [v_broken] * n_broken + [v_quiet] * (n_total - n_broken)
    vs = VarianceSet(tuple(values))
    return arithmetic_mean(vs), harmonic_mean(vs)
