"""Gradient modulation strategies and logit-contribution diagnostics.

All strategies multiply whole parameter-gradient blocks by positive scalars;
they never mix blocks or flip signs. The prioritization strategy scales
encoder gradients only (head and fusion gradients pass through untouched
unless ``scale_head_partitions`` is set), with the dominant-performance
modality boosted by gamma_p and each remaining modality boosted or
suppressed depending on whether it is the optimization-dominant one.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateContributionError, InputError
from .model import GradientSet, HeadGrads

if TYPE_CHECKING:
    from .analyze import ModalityProfile


@dataclass(frozen=True)
class Vanilla:
    """No modulation."""


@dataclass(frozen=True)
class PDMP:
    """Asymmetric prioritization of the performance-dominant modality.

    The performance-dominant modality's encoder gradients are scaled by
    gamma_p >= 1; every other modality gets select_gamma_r's coefficient.
    Coefficients are fixed before training by the supplied profile.
    """

    gamma_p: float
    profile: "ModalityProfile"

    def __post_init__(self):
        if not self.gamma_p >= 1.0:
            raise InputError(f"gamma_p must be >= 1, got {self.gamma_p}")


@dataclass(frozen=True)
class Balanced:
    """Simple balancing baseline: damp whichever modality currently dominates.

    A modality whose contribution share exceeds 1/K has its encoder gradient
    scaled by 1 / (1 + alpha * (K * share - 1)); everything else passes
    through. Equal shares make it the identity.
    """

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class NaiveLRScale:
    """Multiply every gradient block (encoders and head) by k.

    With zero momentum and weight decay this is exactly a k-times larger
    learning rate.
    """

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise InputError(f"k must be > 0, got {self.k}")


Strategy = Vanilla | PDMP | Balanced | NaiveLRScale


@dataclass(frozen=True)
class DependencyCoefficient:
    """Relative logit-contribution weights of the modalities on a batch.

    ``shares`` sum to one; ``w`` is the modality-0 over modality-1 ratio
    (the pairwise coefficient when K = 2), nan if modality 1 contributes
    nothing while others do.
    """

    w: float
    shares: tuple[float, ...]


def _abs_sum(s: np.ndarray) -> float:
    s = np.asarray(s, dtype=np.float64)
    return float(np.add.reduce(np.abs(s).ravel()))


def compute_w(s_1: np.ndarray, s_2: np.ndarray) -> float:
    """Ratio of summed absolute logit contributions, modality 1 over 2."""
    s_1 = np.atleast_2d(np.asarray(s_1, dtype=np.float64))
    s_2 = np.atleast_2d(np.asarray(s_2, dtype=np.float64))
    if s_1.size == 0 or s_2.size == 0:
        raise InputError("contribution matrices must be non-empty")
    if s_1.shape[0] != s_2.shape[0]:
        raise InputError(
            f"contribution batch sizes differ: {s_1.shape[0]} vs {s_2.shape[0]}"
        )
    denom = _abs_sum(s_2)
    if denom == 0.0:
        raise DegenerateContributionError("denominator modality contributes all zeros")
    return _abs_sum(s_1) / denom


def contribution_shares(s: list[np.ndarray]) -> tuple[float, ...]:
    """Each modality's fraction of the total absolute logit mass."""
    if len(s) < 2:
        raise InputError(f"need at least 2 contribution matrices, got {len(s)}")
    batch = np.atleast_2d(np.asarray(s[0])).shape[0]
    totals = []
    for i, si in enumerate(s):
        si = np.atleast_2d(np.asarray(si, dtype=np.float64))
        if si.shape[0] != batch:
            raise InputError(f"contribution {i} batch size {si.shape[0]} != {batch}")
        totals.append(_abs_sum(si))
    grand = 0.0
    for t in totals:
        grand += t
    if grand == 0.0:
        raise DegenerateContributionError("all contributions are zero")
    return tuple(t / grand for t in totals)


def coefficient_from_contributions(s: list[np.ndarray]) -> DependencyCoefficient:
    shares = contribution_shares(s)
    w = shares[0] / shares[1] if shares[1] > 0 else float("nan")
    return DependencyCoefficient(w=w, shares=shares)


def select_gamma_r(gamma_p: float, m_p: int, m_o: int, m_i: int) -> float:
    """Coefficient for a non-dominant modality m_i.

    Suppress (1/gamma_p) exactly when m_i is the optimization-dominant
    modality; accelerate (gamma_p) otherwise. For two modalities this is the
    m_p != m_o / m_p == m_o case split on the single remaining modality.
    """
    if not gamma_p >= 1.0:
        raise InputError(f"gamma_p must be >= 1, got {gamma_p}")
    if m_i == m_p:
        raise InputError(f"m_i ({m_i}) must differ from the dominant modality m_p")
    return 1.0 / gamma_p if m_i == m_o else gamma_p


def _scaled(arr: np.ndarray, factor: float) -> np.ndarray:
    return arr if factor == 1.0 else arr * factor


def _modality_factors(strategy: Strategy, k: int,
                      w_current: DependencyCoefficient | None) -> list[float]:
    if isinstance(strategy, Vanilla):
        return [1.0] * k
    if isinstance(strategy, NaiveLRScale):
        return [strategy.k] * k
    if isinstance(strategy, PDMP):
        m_p, m_o = strategy.profile.m_p, strategy.profile.m_o
        if not (0 <= m_p < k and 0 <= m_o < k):
            raise InputError(
                f"profile indices (m_p={m_p}, m_o={m_o}) out of range for {k} modalities"
            )
        return [strategy.gamma_p if i == m_p
                else select_gamma_r(strategy.gamma_p, m_p, m_o, i)
                for i in range(k)]
    if isinstance(strategy, Balanced):
        if w_current is None:
            raise InputError("Balanced strategy needs the current dependency coefficient")
        if len(w_current.shares) != k:
            raise InputError(
                f"coefficient has {len(w_current.shares)} shares, gradients have {k}"
            )
        factors = []
        for share in w_current.shares:
            if share > 1.0 / k:
                factors.append(1.0 / (1.0 + strategy.alpha * (k * share - 1.0)))
            else:
                factors.append(1.0)
        return factors
    raise InputError(f"unknown strategy {strategy!r}")


def apply_strategy(
    grads: GradientSet,
    strategy: Strategy,
    w_current: DependencyCoefficient | None = None,
    scale_head_partitions: bool = False,
) -> GradientSet:
    """Scale gradient blocks per the strategy; returns a new GradientSet.

    Encoder blocks get their owning modality's factor. Head blocks pass
    through untouched except under NaiveLRScale (which scales everything)
    or when scale_head_partitions is set, in which case per-modality head
    partitions (W_i, per-modality biases, gate parameters) also get their
    modality's factor. A bias shared across modalities is never scaled by
    per-modality strategies.
    """
    k = len(grads.encoders)
    factors = _modality_factors(strategy, k, w_current)

    encoders = [
        [(_scaled(dw, factors[i]), _scaled(db, factors[i])) for dw, db in layers]
        for i, layers in enumerate(grads.encoders)
    ]

    head = grads.head
    if isinstance(strategy, NaiveLRScale):
        head_factor = [strategy.k] * k
        shared_bias_factor = strategy.k
        scale_head = True
    else:
        head_factor = factors
        shared_bias_factor = 1.0
        scale_head = scale_head_partitions

    if scale_head:
        weights = [_scaled(w, head_factor[i]) for i, w in enumerate(head.weights)]
        if len(head.biases) == k:
            biases = [_scaled(b, head_factor[i]) for i, b in enumerate(head.biases)]
        else:
            biases = [_scaled(b, shared_bias_factor) for b in head.biases]
        gate_weights = [_scaled(g, head_factor[i]) for i, g in enumerate(head.gate_weights)]
        gate_biases = [_scaled(g, head_factor[i]) for i, g in enumerate(head.gate_biases)]
        new_head = HeadGrads(weights=weights, biases=biases,
                             gate_weights=gate_weights, gate_biases=gate_biases)
    else:
        new_head = head
    return GradientSet(encoders=encoders, head=new_head)
