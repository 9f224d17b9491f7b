"""Beam-splitter interference networks as real orthogonal mixing matrices.

Output port 0 of a balanced network collects amplitude ``1/sqrt(n)`` from
every input. It is the port kept by the averaging protocols; ports
``1..n-1`` are the measured (trigger) ports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .gaussian import QuadratureCovariance, SampleBatch

__all__ = [
    "MixingNetwork",
    "beam_splitter",
    "balanced_network",
    "householder_network",
    "apply_to_covariance",
    "apply_to_samples",
]

ORTHO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MixingNetwork:
    """Real orthogonal ``n x n`` matrix acting on column vectors of quadratures."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise DomainError(f"mixing matrix must be square, got shape {u.shape}")
        resid = np.max(np.abs(u.T @ u - np.eye(u.shape[0])))
        if resid > ORTHO_TOL:
            raise DomainError(f"mixing matrix is not orthogonal (residual {resid:.3g})")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def T(self) -> "MixingNetwork":
        return MixingNetwork(self.u.T)

    @property
    def balanced(self) -> bool:
        """Whether port 0 receives ``1/sqrt(n)`` in magnitude from every input."""
        return bool(np.all(np.abs(np.abs(self.u[0]) - 1.0 / math.sqrt(self.n)) < ORTHO_TOL))

    def __matmul__(self, other: "MixingNetwork") -> "MixingNetwork":
        return MixingNetwork(self.u @ other.u)


def beam_splitter(theta: float) -> MixingNetwork:
    """Two-port splitter ``[[cos, sin], [sin, -cos]]``; ``pi/4`` is balanced."""
    c, s = math.cos(theta), math.sin(theta)
    return MixingNetwork(np.array([[c, s], [s, -c]]))


def _embed(n: int, outputs: Sequence[int], inputs: Sequence[int], bs: np.ndarray) -> np.ndarray:
    """Identity on ``n`` modes except a 2x2 block mapping ``inputs`` to ``outputs``."""
    m = np.eye(n)
    m[np.ix_(list(outputs), list(inputs))] = bs
    return m


def balanced_network(n: int, phases: Optional[Sequence[float]] = None) -> MixingNetwork:
    """Cascade of ``n-1`` splitters collecting every input equally into port 0.

    Step ``k`` (``k = 1..n-1``) mixes input ``k`` with the running port 0 at
    angle ``arccos(1/sqrt(k+1))``: the new input enters with amplitude
    ``1/sqrt(k+1)`` and the ``k`` inputs already collected keep equal shares.

    Parameters
    ----------
    n
        Port count, at least 2.
    phases
        Optional ``+1/-1`` sign per input, applied before the cascade. It
        models the relative interferometer phase and never breaks the
        balance of port 0.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"a balanced network needs n >= 2 ports, got {n!r}")
    n = int(n)
    u = np.eye(n)
    for k in range(1, n):
        bs = beam_splitter(math.acos(1.0 / math.sqrt(k + 1))).u
        # splitter inputs (x_k, port 0); its first output becomes the new port 0
        u = _embed(n, (0, k), (k, 0), bs) @ u
    if phases is not None:
        ph = np.asarray(phases, dtype=float)
        if ph.shape != (n,) or not np.all(np.abs(ph) == 1.0):
            raise DomainError(f"phases must be {n} entries of +1/-1, got {phases!r}")
        u = u * ph[None, :]
    return MixingNetwork(u)


def householder_network(n: int) -> MixingNetwork:
    """Reflection mapping port 0 onto the balanced direction.

    A second, structurally different completion of the balanced first row.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"a balanced network needs n >= 2 ports, got {n!r}")
    n = int(n)
    w = np.full(n, 1.0 / math.sqrt(n))
    v = w.copy()
    v[0] -= 1.0
    h = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return MixingNetwork(h)


def apply_to_covariance(net: MixingNetwork, sigma) -> QuadratureCovariance:
    """Covariance image ``u @ sigma @ u.T`` of linear interference."""
    cov = QuadratureCovariance.of(sigma)
    if cov.n != net.n:
        raise DomainError(f"network has {net.n} ports but covariance has {cov.n} channels")
    out = net.u @ cov.sigma @ net.u.T
    return QuadratureCovariance(0.5 * (out + out.T))


def apply_to_samples(net: MixingNetwork, batch: SampleBatch, labels: Optional[Sequence[str]] = None) -> SampleBatch:
    """Replace every sample row ``x`` by ``u @ x``."""
    if batch.n_channels != net.n:
        raise DomainError(f"network has {net.n} ports but batch has {batch.n_channels} channels")
    if labels is None:
        labels = [f"port{i}" for i in range(net.n)]
    return SampleBatch(batch.data @ net.u.T, tuple(labels), seed=batch.seed)
