"""Reference ranking strategies with privileged access to the true user model."""

from __future__ import annotations

import abc
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .action_models import ActionModel, SeqModelParams, SequentialTopicModel
from .errors import ContractViolation, EnumerationLimitError
from .types import PreferenceTable, UserState

MAX_ENUMERATION = 8


def check_enumerable(n: int, limit: int = MAX_ENUMERATION, k: int | None = None) -> None:
    """Refuse searches larger than all orderings of ``limit`` documents."""
    k = n if k is None else k
    if (n > limit and k == n) or math.perm(n, k) > math.factorial(limit):
        raise EnumerationLimitError(f"refusing to enumerate permutations of {n} documents "
                                    f"(limit {limit})", n=n, limit=limit)


def is_unbiased(probs) -> bool:
    """In-context click probabilities never increase down the list."""
    probs = np.asarray(probs)
    return bool(np.all(probs[:-1] >= probs[1:]))


def adjacent_inversions(probs) -> int:
    probs = np.asarray(probs)
    return int(np.sum(probs[:-1] < probs[1:]))


@dataclass(frozen=True)
class PermutationTable:
    """Every ordering of a document list with its in-context click probabilities."""

    perms: np.ndarray   # (P, K) doc ids, lexicographic in id order
    probs: np.ndarray   # (P, K)

    @classmethod
    def build(cls, u, docs: Sequence[int], model: ActionModel, k: int | None = None) -> "PermutationTable":
        k = len(docs) if k is None else k
        check_enumerable(len(docs), k=k)
        perms = np.array(list(itertools.permutations(sorted(docs), k)), dtype=np.int64).reshape(-1, k)
        return cls(perms, model.batch_slate_probs(u, perms))

    def unbiased_mask(self) -> tuple[np.ndarray, bool]:
        """Rows satisfying the monotonicity condition, or the fallback set.

        When no ordering is unbiased the orderings with the fewest adjacent
        inversions are returned instead and the flag is set.
        """
        ok = np.all(self.probs[:, :-1] >= self.probs[:, 1:], axis=1)
        if ok.any():
            return ok, False
        inv = np.sum(self.probs[:, :-1] < self.probs[:, 1:], axis=1)
        return inv == inv.min(), True


@dataclass(frozen=True)
class UnbiasedResult:
    ranking: tuple[int, ...]
    flagged: bool


def _preference_key(perm, p0: dict[int, float]):
    return tuple((-p0[d], d) for d in perm)


def unbiased_rank(u0, docs: Sequence[int], model: ActionModel) -> UnbiasedResult:
    """An unbiased ordering of ``docs`` for a user with initial feature ``u0``.

    Among several unbiased orderings, the one closest to sorting by initial
    preference wins (compared position by position, ties on lower id).
    """
    if len(docs) == 0:
        raise ContractViolation("cannot rank an empty list")
    table = PermutationTable.build(u0, docs, model)
    mask, flagged = table.unbiased_mask()
    p0 = dict(zip(docs, model.singleton_probs(u0, list(docs)).tolist()))
    best = min((tuple(p) for p in table.perms[mask].tolist()), key=lambda p: _preference_key(p, p0))
    return UnbiasedResult(best, flagged)


def greedy_enum_rank(u, docs: Sequence[int], model: ActionModel, k: int | None = None) -> tuple[int, ...]:
    """Ordering (of ``k`` of the docs) with the most expected clicks.

    Ties go to the lexicographically smallest id sequence.
    """
    if len(docs) == 0:
        raise ContractViolation("cannot rank an empty list")
    table = PermutationTable.build(u, docs, model, k)
    totals = table.probs.sum(axis=1)
    return tuple(table.perms[int(np.argmax(totals))].tolist())


def expected_clicks(u, slate: Sequence[int], model: ActionModel) -> float:
    return float(model.slate_probs(u, list(slate)).sum())


def planner_scores(user: UserState, docs: Sequence[int], model: SequentialTopicModel,
                   params: SeqModelParams, horizon: int) -> np.ndarray:
    """Expected cumulative clicks from committing to each candidate's topic."""
    if horizon < 1:
        raise ContractViolation(f"planning horizon must be at least 1, got {horizon}")
    topics = model.topics(docs)
    means = np.asarray(params.quality_means)[topics]
    budget = np.inf if user.budget is None else user.budget
    return kernels.planner_values(user.u[topics], means, float(budget), int(horizon),
                                  params.budget_cost_base, params.quality_bonus, params.cost_floor,
                                  params.click_sharpness, params.drift_rate)


def planner_rank(user: UserState, docs: Sequence[int], model: SequentialTopicModel,
                 params: SeqModelParams, horizon: int) -> int:
    ordered = sorted(docs)
    values = planner_scores(user, ordered, model, params, horizon)
    return ordered[int(np.argmax(values))]


def unbiased_sequential_rank(user_id: int, docs: Sequence[int], prefs: PreferenceTable) -> int:
    ordered = sorted(docs)
    scores = prefs.row(user_id, ordered)
    return ordered[int(np.argmax(scores))]


def top_by_preference(user_id: int, docs: Sequence[int], prefs: PreferenceTable, k: int) -> list[int]:
    scores = dict(zip(docs, prefs.row(user_id, list(docs)).tolist()))
    return sorted(docs, key=lambda d: (-scores[d], d))[:k]


# ---------------------------------------------------------------------------
# strategies: the ranking interface used by collection and evaluation


@dataclass(frozen=True)
class RankContext:
    round: int = 1
    rounds_left: int = 1


class Strategy(abc.ABC):
    name: str = "strategy"
    flagged: int = 0

    @abc.abstractmethod
    def rank(self, user: UserState, recall: Sequence[int], k: int, ctx: RankContext) -> tuple[int, ...]:
        """Return an ordered slate of ``k`` documents drawn from ``recall``."""


class UnbiasedOracle(Strategy):
    """Shows the user's initially preferred documents in an unbiased order."""

    name = "unbiased"

    def __init__(self, model: ActionModel, prefs: PreferenceTable):
        self.model = model
        self.prefs = prefs
        self.flagged = 0

    def rank(self, user, recall, k, ctx=RankContext()):
        chosen = top_by_preference(user.user_id, recall, self.prefs, k)
        if k == 1:
            return tuple(chosen)
        result = unbiased_rank(user.u0, chosen, self.model)
        self.flagged += result.flagged
        return result.ranking


class GreedyOracle(Strategy):
    name = "greedy"

    def __init__(self, model: ActionModel):
        self.model = model

    def rank(self, user, recall, k, ctx=RankContext()):
        return greedy_enum_rank(user.u, recall, self.model, k)


class PlannerOracle(Strategy):
    """Rolls each candidate's topic forward to the end of the session."""

    name = "planner"

    def __init__(self, model: SequentialTopicModel, horizon: int | None = None):
        self.model = model
        self.params = model.params
        self.horizon = horizon

    def rank(self, user, recall, k, ctx=RankContext()):
        horizon = self.horizon or ctx.rounds_left
        if k == 1:
            return (planner_rank(user, recall, self.model, self.params, horizon),)
        ordered = sorted(recall)
        values = planner_scores(user, ordered, self.model, self.params, horizon)
        order = sorted(range(len(ordered)), key=lambda i: (-values[i], ordered[i]))
        return tuple(ordered[i] for i in order[:k])
