"""Two-level advantage estimation over an m x G reward block.

For one training example, m permutation variants each produce G
rollouts. Intra advantages z-score each variant's row against its own
mean and population standard deviation; inter advantages z-score every
cell against the pooled m*G moments. The combined advantage is the
weighted sum alpha * intra + gamma * inter. A single-row z-score (m=1)
is the plain group-relative baseline.

Degenerate groups (standard deviation below sigma_floor) yield all-zero
advantages instead of dividing by ~0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GroupTooSmallError, ShapeMismatchError

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class GroupRewards:
    """Rectangular m x G block of scalar rewards, row k = permutation k."""

    per_perm: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_perm, dtype=float)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"rewards must be 2-D (m, G), got shape {arr.shape}")
        object.__setattr__(self, "per_perm", arr)

    @property
    def m(self) -> int:
        return self.per_perm.shape[0]

    @property
    def G(self) -> int:
        return self.per_perm.shape[1]


@dataclass(frozen=True)
class AdvantageBundle:
    intra: np.ndarray
    inter: np.ndarray
    combined: np.ndarray
    alpha: float
    gamma: float
    sigma_floor: float


def _zscore(values: np.ndarray, sigma_floor: float) -> np.ndarray:
    mu = np.mean(values)
    sigma = np.sqrt(np.mean((values - mu) ** 2))
    if sigma < sigma_floor:
        return np.zeros_like(values)
    return (values - mu) / sigma


def intra_advantages(rewards: GroupRewards, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Per-row z-scores; a constant row contributes all zeros."""
    if rewards.G < 2:
        raise GroupTooSmallError(f"need G >= 2 rollouts per permutation, got {rewards.G}")
    return np.stack([_zscore(row, sigma_floor) for row in rewards.per_perm])


def inter_advantages(rewards: GroupRewards, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Pooled z-scores over all m*G cells."""
    if rewards.m * rewards.G < 2:
        raise GroupTooSmallError(f"need m*G >= 2 rollouts, got {rewards.m * rewards.G}")
    flat = _zscore(rewards.per_perm.reshape(-1), sigma_floor)
    return flat.reshape(rewards.per_perm.shape)


def combine(
    intra: np.ndarray, inter: np.ndarray, alpha: float = 0.1, gamma: float = 0.9
) -> np.ndarray:
    """Elementwise alpha * intra + gamma * inter."""
    intra = np.asarray(intra, dtype=float)
    inter = np.asarray(inter, dtype=float)
    if intra.shape != inter.shape:
        raise ShapeMismatchError(f"intra shape {intra.shape} != inter shape {inter.shape}")
    if alpha < 0 or gamma < 0:
        raise ValueError("alpha and gamma must be non-negative")
    return alpha * intra + gamma * inter


def grpo_advantages(rewards: list[float] | np.ndarray, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Single-group z-score baseline."""
    values = np.asarray(rewards, dtype=float)
    if values.ndim != 1:
        raise ShapeMismatchError(f"expected a 1-D reward group, got shape {values.shape}")
    if values.size < 2:
        raise GroupTooSmallError(f"need G >= 2 rollouts, got {values.size}")
    return _zscore(values, sigma_floor)


def estimate(
    rewards: GroupRewards,
    alpha: float = 0.1,
    gamma: float = 0.9,
    sigma_floor: float = SIGMA_FLOOR,
) -> AdvantageBundle:
    """Compute intra, inter, and combined advantages for one example."""
    intra = intra_advantages(rewards, sigma_floor)
    inter = inter_advantages(rewards, sigma_floor)
    return AdvantageBundle(
        intra=intra,
        inter=inter,
        combined=combine(intra, inter, alpha, gamma),
        alpha=alpha,
        gamma=gamma,
        sigma_floor=sigma_floor,
    )
