"""Generalized coverage reward: entropy, information gain, action cost."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from world import Cell


class RewardWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    k_I: float = Field(1.0, ge=0.0)
    k_C: float = Field(0.2, ge=0.0)
    k_d: float = Field(1.0, ge=0.0)
    k_rho: float = Field(5.0, ge=0.0)
    k_mu: float = Field(0.3, ge=0.0)
    gamma: float = Field(0.95, gt=0.0, le=1.0)


def binary_entropy(p: float | np.ndarray) -> float | np.ndarray:
    """Entropy in bits of a Bernoulli(p), with 0·log 0 = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    h = np.where((p <= 0.0) | (p >= 1.0), 0.0, h)
    return float(h) if h.ndim == 0 else h


def coverage_entropy(probabilities: Iterable[float]) -> float:
    p = np.fromiter(probabilities, dtype=float)
    if p.size == 0:
        return 0.0
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("coverage probabilities must lie in [0, 1]")
    return float(np.sum(binary_entropy(p)))


def info_gain(snapshot: Mapping[Cell, float], footprint: Iterable[Cell]) -> float:
    """Entropy removed by setting every footprint node to p = 1.

    Cells of the footprint missing from *snapshot* carry no information.
    """
    cells = {c for c in footprint if c in snapshot}
    return coverage_entropy(snapshot[c] for c in cells)


def action_cost(d: float, rho: float, heading_change: int, weights: RewardWeights) -> float:
    """``k_d·d + k_rho·rho + k_mu·mu`` with mu the heading change over 4 (reversal = 1)."""
    if d < 0.0 or not 0.0 <= rho <= 1.0:
        raise ValueError(f"invalid edge properties d={d}, rho={rho}")
    mu = min(abs(int(heading_change)), 4) / 4.0
    return weights.k_d * d + weights.k_rho * rho + weights.k_mu * mu


def step_reward(info: float, cost: float, weights: RewardWeights) -> float:
    return weights.k_I * info - weights.k_C * cost


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        return 0.0
    return float(np.sum(r * gamma ** np.arange(r.size)))
