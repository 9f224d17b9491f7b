"""Averaging protocol engines.

Four ways to turn ``n`` resources into one averaged output:

* ``arithmetic-pick``: pick one resource uniformly at random per sample.
* ``arithmetic-interference``: interfere all inputs, keep port 0, discard the rest.
* ``harmonic-heralded``: keep port 0 only when every trigger port reads
  inside ``|b| <= t``. Needs no knowledge of the inputs.
* ``harmonic-feedforward``: displace port 0 by ``-g @ b`` with the gain
  computed from the known input covariance.

For two inputs the interference network is phased so port 0 is the
destructive port, ``(x1 - x2)/sqrt(2)``, and port 1 (the noisier one under
positive correlation) is the trigger.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, StarvedSelectionError
from .estimator import SuccessEstimate, VarianceEstimate, estimate_success, estimate_variance
from .gaussian import (
    QuadratureCovariance,
    SampleBatch,
    TruncationWindow,
    conditional_covariance,
    feedforward_gain,
    finite_window_conditional_variance,
    sample_gaussian,
)
from .means import arithmetic_mean
from .network import MixingNetwork, apply_to_covariance, apply_to_samples, balanced_network

__all__ = [
    "ARITHMETIC_PICK",
    "ARITHMETIC_INTERFERENCE",
    "HARMONIC_HERALDED",
    "HARMONIC_FEEDFORWARD",
    "PROTOCOLS",
    "PostSelectionRule",
    "ProtocolOutcome",
    "interference_network",
    "herald",
    "heralded_outcome",
    "heralded_prediction",
    "narrow_window",
    "interference_outcome",
    "feedforward_outcome",
    "run_arithmetic_pick",
    "run_arithmetic_interference",
    "run_harmonic_heralded",
    "run_harmonic_feedforward",
]

ARITHMETIC_PICK = "arithmetic-pick"
ARITHMETIC_INTERFERENCE = "arithmetic-interference"
HARMONIC_HERALDED = "harmonic-heralded"
HARMONIC_FEEDFORWARD = "harmonic-feedforward"
PROTOCOLS = (ARITHMETIC_PICK, ARITHMETIC_INTERFERENCE, HARMONIC_HERALDED, HARMONIC_FEEDFORWARD)

KEPT_PORT = 0


@dataclass(frozen=True)
class PostSelectionRule:
    """Keep a sample iff every trigger channel lies inside the window."""

    trigger_channels: tuple[int, ...]
    window: TruncationWindow = field(default_factory=TruncationWindow.open)

    def __post_init__(self):
        trig = (self.trigger_channels,) if isinstance(self.trigger_channels, (int, np.integer)) \
            else tuple(self.trigger_channels)
        trig = tuple(int(c) for c in trig)
        if not trig:
            raise DomainError("post-selection needs at least one trigger channel")
        if len(set(trig)) != len(trig) or min(trig) < 0:
            raise DomainError(f"invalid trigger channels {trig}")
        object.__setattr__(self, "trigger_channels", trig)
        object.__setattr__(self, "window", TruncationWindow.of(self.window))

    @classmethod
    def all_but(cls, n: int, window=None, keep: int = KEPT_PORT) -> "PostSelectionRule":
        """Trigger on every port except ``keep``."""
        return cls(tuple(i for i in range(n) if i != keep), TruncationWindow.of(window))


@dataclass(frozen=True)
class ProtocolOutcome:
    protocol: str
    variance: VarianceEstimate
    success: SuccessEstimate
    analytic_prediction: Optional[float] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise DomainError(f"unknown protocol tag {self.protocol!r}")
        if self.protocol in (ARITHMETIC_PICK, ARITHMETIC_INTERFERENCE, HARMONIC_FEEDFORWARD) \
                and self.success.p != 1.0:
            raise DomainError(f"{self.protocol} is deterministic; success probability must be 1")

    @property
    def kept_count(self) -> int:
        return self.success.kept

    @property
    def total(self) -> int:
        return self.success.total

    @property
    def success_probability(self) -> float:
        return self.success.p


def interference_network(n: int) -> MixingNetwork:
    """Balanced network with inputs ``1..n-1`` entering at opposite phase to input 0."""
    return balanced_network(n, phases=[1.0] + [-1.0] * (n - 1))


def _deterministic(protocol: str, samples: np.ndarray, analytic: Optional[float]) -> ProtocolOutcome:
    n = samples.shape[0]
    if n < 2:
        raise DomainError("need at least 2 samples")
    return ProtocolOutcome(protocol, estimate_variance(samples), estimate_success(n, n), analytic)


def _mixed(sigma, n_samples, seed, network):
    cov = QuadratureCovariance.of(sigma)
    net = interference_network(cov.n) if network is None else network
    if net.n != cov.n:
        raise DomainError(f"network has {net.n} ports but covariance has {cov.n} channels")
    batch = sample_gaussian(cov, n_samples, seed)
    return cov, net, apply_to_covariance(net, cov), apply_to_samples(net, batch)


def run_arithmetic_pick(batches: Sequence[SampleBatch], seed: int,
                        variances: Optional[Sequence[float]] = None) -> ProtocolOutcome:
    """Per sample, output the reading of one uniformly chosen resource.

    ``batches`` holds one single-channel batch per resource. The choice
    stream is seeded by ``seed`` alone, independent of how the batches were
    generated. ``variances``, if given, only fills ``analytic_prediction``.
    """
    if len(batches) < 1:
        raise DomainError("need at least one resource batch")
    lengths = {b.n_samples for b in batches}
    if len(lengths) != 1:
        raise DomainError(f"resource batches differ in length: {sorted(lengths)}")
    for b in batches:
        if b.n_channels != 1:
            raise DomainError("each resource batch must hold exactly one channel")
    data = np.column_stack([b.data[:, 0] for b in batches])
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pick = rng.integers(0, data.shape[1], size=data.shape[0])
    out = data[np.arange(data.shape[0]), pick]
    analytic = arithmetic_mean(variances) if variances is not None else None
    return _deterministic(ARITHMETIC_PICK, out, analytic)


def interference_outcome(mixed: SampleBatch, image: Optional[QuadratureCovariance] = None) -> ProtocolOutcome:
    """Keep port 0 of already-interfered samples, discarding the other ports."""
    analytic = None if image is None else float(image[KEPT_PORT, KEPT_PORT])
    return _deterministic(ARITHMETIC_INTERFERENCE, mixed.data[:, KEPT_PORT], analytic)


def run_arithmetic_interference(sigma, n_samples: int, seed: int,
                                network: Optional[MixingNetwork] = None) -> ProtocolOutcome:
    """Interfere the inputs and keep port 0; its variance is the arithmetic mean."""
    _, _, image, mixed = _mixed(sigma, n_samples, seed, network)
    return interference_outcome(mixed, image)


def herald(batch: SampleBatch, rule: PostSelectionRule, keep: int = KEPT_PORT) -> tuple[np.ndarray, np.ndarray]:
    """Post-select ``keep`` on the measured trigger outcomes alone.

    Returns the kept samples and the boolean acceptance mask. Nothing about
    the input states is consulted, only the readings and the window.
    """
    if keep in rule.trigger_channels:
        raise DomainError(f"kept channel {keep} is also a trigger")
    if max(rule.trigger_channels) >= batch.n_channels or not 0 <= keep < batch.n_channels:
        raise DomainError(f"rule references channels outside the batch ({batch.n_channels} channels)")
    if rule.window.is_open:
        mask = np.ones(batch.n_samples, dtype=bool)
    else:
        trig = batch.data[:, list(rule.trigger_channels)]
        mask = np.all(np.abs(trig) <= rule.window.threshold, axis=1)
    return batch.data[mask, keep], mask


def heralded_outcome(batch: SampleBatch, rule: PostSelectionRule, keep: int = KEPT_PORT,
                     analytic_prediction: Optional[float] = None) -> ProtocolOutcome:
    """Heralded outcome from measured data; raises on starved selection."""
    kept, mask = herald(batch, rule, keep)
    total = batch.n_samples
    if kept.size < 2:
        raise StarvedSelectionError(int(kept.size), total, rule.window.threshold)
    return ProtocolOutcome(
        HARMONIC_HERALDED,
        estimate_variance(kept),
        estimate_success(int(mask.sum()), total),
        analytic_prediction,
        rule.window.threshold,
    )


def heralded_prediction(image: QuadratureCovariance, rule: PostSelectionRule, keep: int = KEPT_PORT) -> Optional[float]:
    """Closed-form heralded variance where one exists.

    Exact for one trigger channel or an open window; ``None`` otherwise.
    """
    if rule.window.is_open:
        return float(image[keep, keep])
    if len(rule.trigger_channels) == 1:
        return finite_window_conditional_variance(image, rule.window, keep, rule.trigger_channels[0])
    return None


def run_harmonic_heralded(sigma, n_samples: int, rule: PostSelectionRule, seed: int,
                          network: Optional[MixingNetwork] = None) -> ProtocolOutcome:
    """Sample, interfere, and post-select port 0 on the trigger ports.

    ``sigma`` drives the simulated sources and the ``analytic_prediction``
    annotation; the selection itself goes through :func:`heralded_outcome`,
    which sees only the measured batch.
    """
    _, _, image, mixed = _mixed(sigma, n_samples, seed, network)
    return heralded_outcome(mixed, rule, KEPT_PORT, heralded_prediction(image, rule))


def feedforward_outcome(mixed: SampleBatch, image: QuadratureCovariance) -> ProtocolOutcome:
    """Correct port 0 by ``-g @ b`` with gains from the a-priori known ``image``."""
    n = mixed.n_channels
    clamp = [i for i in range(n) if i != KEPT_PORT]
    if not clamp:
        raise DomainError("feedforward needs at least two inputs")
    g = feedforward_gain(image, KEPT_PORT, clamp)
    corrected = mixed.data[:, KEPT_PORT] - mixed.data[:, clamp] @ g
    analytic = float(conditional_covariance(image, [KEPT_PORT], clamp)[0, 0])
    return _deterministic(HARMONIC_FEEDFORWARD, corrected, analytic)


def run_harmonic_feedforward(sigma, n_samples: int, seed: int,
                             network: Optional[MixingNetwork] = None) -> ProtocolOutcome:
    """Displace port 0 by ``-g @ b`` using gains from the known covariance.

    Every sample is kept; the output variance is the Schur complement of
    port 0 given the trigger ports.
    """
    _, _, image, mixed = _mixed(sigma, n_samples, seed, network)
    return feedforward_outcome(mixed, image)


def narrow_window(batch: SampleBatch, rule_channels: Sequence[int], min_kept: int) -> TruncationWindow:
    """Smallest window that keeps at least ``min_kept`` samples.

    The threshold is the ``min_kept``-th smallest value of
    ``max_j |b_j|`` over the trigger channels, so exactly that many
    samples pass (barring ties).
    """
    if min_kept < 2 or min_kept > batch.n_samples:
        raise DomainError(f"min_kept must lie in [2, {batch.n_samples}], got {min_kept}")
    worst = np.max(np.abs(batch.data[:, list(rule_channels)]), axis=1)
    t = float(np.partition(worst, min_kept - 1)[min_kept - 1])
    if t <= 0:
        raise DomainError("degenerate trigger data (zero readings)")
    return TruncationWindow(t)
