"""Decoy-aware loss reweighting and the position-bias estimate it needs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..action_models import ActionModel, sample_clicks
from ..errors import ConfigError
from ..types import UserState

BIAS_FLOOR = 1e-3


def mitigation_weight(k: int, r_j: float, r_i: float | None, w: Sequence[float]) -> float:
    """Inverse of the modelled click propensity ``w_k * exp(r_j - r_i)``.

    ``k`` is the 1-based position. The top item has no predecessor, so its
    decoy factor is 1 whatever ``r_i`` says.
    """
    if not 1 <= k <= len(w):
        raise ConfigError(f"position {k} outside the bias vector of length {len(w)}")
    w_k = float(w[k - 1])
    if not w_k > 0:
        raise ConfigError(f"position bias w_{k} must be positive, got {w_k}")
    if k == 1 or r_i is None:
        r_i = r_j
    return 1.0 / (w_k * math.exp(r_j - r_i))


def impression_weights(relevance: np.ndarray, positions: np.ndarray, w: Sequence[float]) -> np.ndarray:
    """Vectorised :func:`mitigation_weight` over impressions stored slate by slate.

    ``positions`` are 1-based and each slate's impressions are contiguous and
    in display order, so the predecessor of position k sits one row above.
    """
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ConfigError("position bias entries must be positive")
    if positions.size and positions.max() > w.size:
        raise ConfigError(f"position {int(positions.max())} outside the bias vector of length {w.size}")
    prev = np.empty_like(relevance)
    prev[1:] = relevance[:-1]
    first = positions == 1
    prev[first] = relevance[first]
    return 1.0 / (w[positions - 1] * np.exp(relevance - prev))


@dataclass(frozen=True)
class PositionBias:
    weights: tuple[float, ...]
    floored: tuple[bool, ...]
    clicks: tuple[int, ...]
    n_rounds: int


def estimate_position_bias(model: ActionModel, users: Sequence[UserState], doc_ids: Sequence[int],
                           rng: np.random.Generator, n_rounds: int, slate_size: int) -> PositionBias:
    """Click rate per position under uniformly random slates, relative to the top."""
    if n_rounds < 1:
        raise ConfigError("n_rounds must be at least 1", key="n_rounds")
    if not 1 <= slate_size <= len(doc_ids):
        raise ConfigError(f"slate size {slate_size} does not fit {len(doc_ids)} documents")
    if not users:
        raise ConfigError("need at least one user")
    pool = np.asarray(doc_ids, dtype=np.int64)
    who = rng.integers(0, len(users), size=n_rounds)
    slates = np.empty((n_rounds, slate_size), dtype=np.int64)
    for r in range(n_rounds):
        slates[r] = rng.choice(pool, size=slate_size, replace=False)
    clicks = np.zeros(slate_size, dtype=np.int64)
    for i in np.unique(who):
        rows = who == i
        probs = model.batch_slate_probs(users[i].u, slates[rows])
        clicks += sample_clicks(probs, rng).sum(axis=0)
    rate = clicks / n_rounds
    floored = rate <= 0
    rate = np.where(floored, BIAS_FLOOR, rate)
    return PositionBias(tuple((rate / rate[0]).tolist()), tuple(floored.tolist()),
                        tuple(clicks.tolist()), n_rounds)
