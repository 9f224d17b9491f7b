"""Zero-mean Gaussian ensembles of amplitude quadratures.

Covariance construction, seeded sampling, Schur-complement conditioning,
feedforward gains and the truncated-normal formulas behind finite
post-selection windows.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize, special

from .errors import DomainError, UnsupportedConfigurationError
from .means import CorrelatedPair, VarianceSet

__all__ = [
    "QuadratureCovariance",
    "TruncationWindow",
    "SampleBatch",
    "derive_seed",
    "sample_gaussian",
    "conditional_covariance",
    "feedforward_gain",
    "truncated_variance",
    "success_probability",
    "threshold_for_success",
    "finite_window_conditional_variance",
    "crossing_success_probability",
]

SYMMETRY_RTOL = 1e-12
PD_RTOL = 1e-12
DEFAULT_CHUNK = 1 << 16
_SQRT2 = math.sqrt(2.0)
_MAX_SEED = 2**64
# keeps derived job seeds out of the key space used for sampling chunks
_DERIVE_TAG = 0x5EED


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadratureCovariance:
    """Second moments of zero-mean amplitude quadratures, shot-noise units.

    The diagonal holds the variances ``V_i`` and the off-diagonal entries the
    correlations ``C_ij``. Construction rejects matrices that are not
    symmetric to 1e-12 relative or whose smallest eigenvalue is not above
    ``1e-12 * trace``.
    """

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim == 0:
            s = s.reshape(1, 1)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
            raise DomainError(f"covariance must be a non-empty square matrix, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DomainError("covariance has non-finite entries")
        scale = np.max(np.abs(s))
        if np.max(np.abs(s - s.T)) > SYMMETRY_RTOL * scale:
            raise DomainError("covariance is not symmetric")
        s = 0.5 * (s + s.T)
        eig_min = float(np.linalg.eigvalsh(s)[0])
        trace = float(np.trace(s))
        if not eig_min > PD_RTOL * trace:
            raise DomainError(
                f"covariance is not positive definite: smallest eigenvalue {eig_min:.6g} "
                f"(needs > {PD_RTOL:g} * trace = {PD_RTOL * trace:.3g})"
            )
        object.__setattr__(self, "sigma", _readonly(s))

    @classmethod
    def from_variances(cls, variances) -> "QuadratureCovariance":
        return cls(np.diag(VarianceSet.of(variances).as_array()))

    @classmethod
    def from_pair(cls, pair: CorrelatedPair) -> "QuadratureCovariance":
        return cls(pair.covariance())

    @classmethod
    def of(cls, x) -> "QuadratureCovariance":
        if isinstance(x, cls):
            return x
        if isinstance(x, CorrelatedPair):
            return cls.from_pair(x)
        return cls(x)

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.sigma).copy()

    def __getitem__(self, idx):
        return self.sigma[idx]

    def __eq__(self, other):
        return isinstance(other, QuadratureCovariance) and np.array_equal(self.sigma, other.sigma)

    def __repr__(self):
        return f"QuadratureCovariance({self.sigma.tolist()!r})"


@dataclass(frozen=True)
class TruncationWindow:
    """Symmetric acceptance window ``|b| <= threshold``; ``None`` means open."""

    threshold: Optional[float] = None

    def __post_init__(self):
        t = self.threshold
        if t is None:
            return
        t = float(t)
        if math.isinf(t) and t > 0:
            object.__setattr__(self, "threshold", None)
            return
        if not (t > 0 and math.isfinite(t)):
            raise DomainError(f"window threshold must be > 0, got {self.threshold!r}")
        object.__setattr__(self, "threshold", t)

    @classmethod
    def open(cls) -> "TruncationWindow":
        return cls(None)

    @property
    def is_open(self) -> bool:
        return self.threshold is None

    @property
    def t(self) -> float:
        return math.inf if self.threshold is None else self.threshold

    @classmethod
    def of(cls, x) -> "TruncationWindow":
        if isinstance(x, cls):
            return x
        return cls(x)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """N x m quadrature samples with channel labels and seed provenance."""

    data: np.ndarray
    channel_labels: tuple[str, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or d.shape[0] < 1:
            raise DomainError(f"sample data must be N x m with N >= 1, got shape {d.shape}")
        labels = tuple(str(x) for x in self.channel_labels)
        if len(labels) != d.shape[1]:
            raise DomainError(f"{len(labels)} labels for {d.shape[1]} channels")
        if len(set(labels)) != len(labels):
            raise DomainError(f"channel labels must be unique, got {labels}")
        object.__setattr__(self, "data", _readonly(d))
        object.__setattr__(self, "channel_labels", labels)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    N = n_samples

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def channel(self, key) -> np.ndarray:
        if isinstance(key, str):
            key = self.channel_labels.index(key)
        return self.data[:, key]


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise DomainError(f"seed must be a non-negative integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise DomainError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for job ``keys`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(_DERIVE_TAG, *(int(k) for k in keys)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _chunk_normals(seed: int, index: int, rows: int, cols: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    return rng.standard_normal((rows, cols))


def sample_gaussian(
    sigma,
    n_samples: int,
    seed: int,
    *,
    labels: Optional[Sequence[str]] = None,
    chunk_size: int = DEFAULT_CHUNK,
    workers: Optional[int] = None,
) -> SampleBatch:
    """Draw ``n_samples`` zero-mean vectors with covariance ``sigma``.

    Rows are produced in fixed-size chunks; chunk ``i`` draws from a stream
    keyed by ``(seed, i)``, so the output does not depend on ``workers``.
    Samples are ``z @ L.T`` with ``L`` the lower Cholesky factor.
    """
    cov = QuadratureCovariance.of(sigma)
    seed = _check_seed(seed)
    if int(n_samples) != n_samples or n_samples < 1:
        raise DomainError(f"n_samples must be a positive integer, got {n_samples!r}")
    n_samples = int(n_samples)
    if chunk_size < 1:
        raise DomainError("chunk_size must be >= 1")
    m = cov.n
    L = np.linalg.cholesky(cov.sigma)
    bounds = [(i, start, min(start + chunk_size, n_samples))
              for i, start in enumerate(range(0, n_samples, chunk_size))]
    out = np.empty((n_samples, m))

    def fill(job):
        i, a, b = job
        out[a:b] = _chunk_normals(seed, i, b - a, m) @ L.T

    if workers and workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(fill, bounds))
    else:
        for job in bounds:
            fill(job)
    if labels is None:
        labels = [f"x{i}" for i in range(m)]
    return SampleBatch(out, tuple(labels), seed=seed)


def _indices(idx, n: int, name: str) -> list[int]:
    if isinstance(idx, (int, np.integer)):
        idx = [idx]
    out = [int(i) for i in idx]
    for i in out:
        if not 0 <= i < n:
            raise DomainError(f"{name} index {i} out of range for {n} channels")
    if len(set(out)) != len(out):
        raise DomainError(f"duplicate {name} indices {out}")
    return out


def _schur_parts(sigma, keep, clamp):
    cov = QuadratureCovariance.of(sigma)
    k = _indices(keep, cov.n, "keep")
    c = _indices(clamp, cov.n, "clamp")
    if not k:
        raise DomainError("keep set is empty")
    if set(k) & set(c):
        raise DomainError(f"keep {k} and clamp {c} overlap")
    s = cov.sigma
    s_kk = s[np.ix_(k, k)]
    if not c:
        return s_kk, np.zeros((len(k), 0)), None
    s_kc = s[np.ix_(k, c)]
    s_cc = s[np.ix_(c, c)]
    try:
        factor = linalg.cho_factor(s_cc, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise DomainError(f"clamped block is singular: {exc}") from exc
    gain = linalg.cho_solve(factor, s_kc.T, check_finite=False).T
    return s_kk, s_kc, gain


def conditional_covariance(sigma, keep, clamp) -> QuadratureCovariance:
    """Covariance of ``keep`` given the ``clamp`` channels are exactly zero.

    This is the Schur complement ``S_kk - S_kc S_cc^-1 S_ck``, the
    narrow-window limit of post-selection on the clamped channels.
    """
    s_kk, s_kc, gain = _schur_parts(sigma, keep, clamp)
    if gain is None:
        return QuadratureCovariance(s_kk)
    return QuadratureCovariance(s_kk - gain @ s_kc.T)


def feedforward_gain(sigma, keep: int, clamp) -> np.ndarray:
    """Gain ``g = S_kc S_cc^-1`` for a single kept channel.

    Displacing the kept outcome by ``-g @ b`` (``b`` the clamped outcomes)
    leaves the Schur-complement variance, which is the minimum achievable
    by any linear correction.
    """
    if not isinstance(keep, (int, np.integer)):
        raise DomainError("feedforward acts on a single kept channel")
    _, _, gain = _schur_parts(sigma, [keep], clamp)
    if gain is None:
        raise DomainError("feedforward needs at least one clamped channel")
    return gain[0].copy()


def _truncated_ratio(alpha: float) -> float:
    """Var(Z | |Z| <= alpha) for standard normal Z."""
    if alpha < 1e-2:
        a2 = alpha * alpha
        return a2 / 3.0 * (1.0 - 2.0 * a2 / 15.0 + 2.0 * a2 * a2 / 315.0)
    mass = float(special.erf(alpha / _SQRT2))
    tail = alpha * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * alpha * alpha)
    return 1.0 - tail / mass


def truncated_variance(variance: float, window) -> float:
    """Variance of ``B ~ N(0, variance)`` conditioned on ``|B| <= t``."""
    if not variance > 0:
        raise DomainError(f"variance must be > 0, got {variance!r}")
    w = TruncationWindow.of(window)
    if w.is_open:
        return float(variance)
    return float(variance) * _truncated_ratio(w.threshold / math.sqrt(variance))


def success_probability(variance: float, window) -> float:
    """``P(|B| <= t) = erf(t / sqrt(2 variance))``; open window gives 1."""
    if not variance > 0:
        raise DomainError(f"variance must be > 0, got {variance!r}")
    w = TruncationWindow.of(window)
    if w.is_open:
        return 1.0
    return float(special.erf(w.threshold / math.sqrt(2.0 * variance)))


def threshold_for_success(variance: float, ps: float) -> TruncationWindow:
    """Window whose single-channel success probability is ``ps``.

    ``ps = 1`` gives the open window. The inversion is the closed form
    ``t = sqrt(2 variance) erfinv(ps)``.
    """
    if not variance > 0:
        raise DomainError(f"variance must be > 0, got {variance!r}")
    if not 0 < ps <= 1:
        raise DomainError(f"target success probability must lie in (0, 1], got {ps!r}")
    if ps == 1:
        return TruncationWindow.open()
    t = math.sqrt(2.0 * variance) * float(special.erfinv(ps))
    if not math.isfinite(t):
        return TruncationWindow.open()
    return TruncationWindow(t)


def finite_window_conditional_variance(sigma, window, keep: int = 0, trigger=1) -> float:
    """``Var(keep | |trigger| <= t)`` for a single trigger channel.

    Writing the kept outcome as ``g * b + r`` with ``r`` independent of the
    trigger ``b`` gives ``Schur + g**2 * truncated_variance(Var(b), t)``.
    Other channels in ``sigma`` are marginalized, not conditioned on.
    """
    if not isinstance(trigger, (int, np.integer)):
        trig = list(trigger)
        if len(trig) != 1:
            raise UnsupportedConfigurationError(
                f"finite-window closed form needs exactly one trigger channel, got {len(trig)}; "
                "use the Monte Carlo path"
            )
        trigger = trig[0]
    cov = QuadratureCovariance.of(sigma)
    w = TruncationWindow.of(window)
    s_kk, s_kc, gain = _schur_parts(cov, [keep], [trigger])
    if w.is_open:
        return float(s_kk[0, 0])
    schur = float(s_kk[0, 0] - gain[0, 0] * s_kc[0, 0])
    g = float(gain[0, 0])
    return schur + g * g * truncated_variance(float(cov.sigma[trigger, trigger]), w)


def crossing_success_probability(sigma, level: float = 1.0, keep: int = 0, trigger: int = 1) -> Optional[float]:
    """Success probability at which the finite-window variance equals ``level``.

    Returns ``None`` when ``level`` is outside the range swept between the
    narrow-window limit and the open-window variance.
    """
    cov = QuadratureCovariance.of(sigma)
    lo = float(conditional_covariance(cov, [keep], [trigger]).sigma[0, 0])
    hi = finite_window_conditional_variance(cov, None, keep, trigger)
    if not lo < level < hi:
        return None
    v_trig = float(cov.sigma[trigger, trigger])
    t_hi = math.sqrt(v_trig)
    while finite_window_conditional_variance(cov, t_hi, keep, trigger) < level:
        t_hi *= 2.0
    t = optimize.brentq(
        lambda x: finite_window_conditional_variance(cov, x, keep, trigger) - level,
        1e-300, t_hi, xtol=1e-14, rtol=1e-14,
    )
    return success_probability(v_trig, t)
