"""Recall sampling, data collection and log mixing."""

from __future__ import annotations

import math
import zlib
from typing import Sequence

import numpy as np

from ..action_models import ActionModel, sample_clicks
from ..errors import ConfigError, ContractViolation
from ..oracles import GreedyOracle, PlannerOracle, RankContext, Strategy, UnbiasedOracle
from ..types import DocumentSet, InteractionLog, LogRow, PreferenceTable, Slate, UserState
from .world import COLLECT, World

ORACLES = ("greedy", "unbiased", "planner")


class ClickHistory:
    """Running per-document click and impression counts for ctr-weighted recall."""

    def __init__(self, doc_ids: Sequence[int]):
        self.ids = np.asarray(doc_ids, dtype=np.int64)
        self._col = {int(d): j for j, d in enumerate(self.ids)}
        self.clicks = np.zeros(len(self.ids))
        self.shown = np.zeros(len(self.ids))

    def update(self, slate: Slate) -> None:
        for d, c in zip(slate.docs, slate.clicks):
            j = self._col[d]
            self.shown[j] += 1
            self.clicks[j] += c

    def rates(self, doc_ids: Sequence[int] | None = None) -> np.ndarray:
        # add-one smoothing keeps unseen documents drawable; equal history gives equal rates
        rates = (self.clicks + 1.0) / (self.shown + 2.0)
        if doc_ids is None:
            return rates
        return rates[[self._col[int(d)] for d in doc_ids]]


def slate_group_recall(docs: DocumentSet, rng: np.random.Generator) -> tuple[str, list[int]]:
    """A random group, then {d1, d2, d3} or {d1, d3, d4} with equal chance."""
    queries = sorted(docs.query_index)
    q = queries[int(rng.integers(len(queries)))]
    d1, d2, d3, d4 = docs.for_query(q)
    return q, ([d1, d2, d3] if rng.random() < 0.5 else [d1, d3, d4])


def sample_recall(docs: Sequence[int], sampler: str, size: int, rng: np.random.Generator,
                  history: ClickHistory | None = None) -> list[int]:
    pool = np.asarray(docs, dtype=np.int64)
    if size > len(pool):
        raise ConfigError(f"recall size {size} exceeds the {len(pool)} available documents",
                          key="run.recall_size")
    if sampler == "random":
        p = None
    elif sampler == "ctr-weighted":
        if history is None:
            p = None
        else:
            rates = history.rates(pool)
            p = rates / rates.sum()
    else:
        raise ConfigError(f"unknown sampler {sampler!r}", key="run.sampler")
    return rng.choice(pool, size=size, replace=False, p=p).tolist()


def make_strategy(name: str, world: World, prefs: PreferenceTable) -> Strategy:
    if name == "greedy":
        return GreedyOracle(world.model)
    if name == "unbiased":
        return UnbiasedOracle(world.model, prefs)
    if name == "planner":
        if world.cfg.is_slate:
            raise ConfigError("the planner oracle needs the sequential scenario", key="strategy")
        return PlannerOracle(world.model, world.cfg.sequential.planner_horizon or None)
    raise ConfigError(f"unknown oracle {name!r}; expected one of {ORACLES}", key="strategy")


def stream_tag(name: str) -> int:
    return zlib.crc32(name.encode())


def collect(world: World, users: Sequence[UserState], strategy: Strategy, prefs: PreferenceTable,
            rounds: int, stream: Sequence[int], tag: str | None = None) -> InteractionLog:
    """Run ``rounds`` interaction rounds for every user and log them.

    Each user draws recall lists and clicks from its own generator seeded by
    ``[*stream, user_id]``, so a user's trajectory does not depend on who
    else is in the population. ``users`` are advanced in place; a user whose
    budget runs out stops producing rows.
    """
    cfg = world.cfg
    prefs.require_complete([u.user_id for u in users], world.docs)
    tag = tag or strategy.name
    model: ActionModel = world.model
    k, size = cfg.run.slate_size, cfg.run.recall_size
    rngs = {u.user_id: np.random.default_rng([*stream, u.user_id]) for u in users}
    history = ClickHistory(world.docs.ids) if cfg.run.sampler == "ctr-weighted" else None
    all_ids = list(world.docs.ids)
    rows = []
    for r in range(1, rounds + 1):
        ctx = RankContext(r, rounds - r + 1)
        for i, user in enumerate(users):
            if user.exited:
                continue
            rng = rngs[user.user_id]
            if cfg.is_slate:
                query, recall = slate_group_recall(world.docs, rng)
            else:
                query = user.q
                recall = sample_recall(all_ids, cfg.run.sampler, size, rng, history)
            shown = tuple(strategy.rank(user, recall, k, ctx))
            probs = model.slate_probs(user.u, shown)
            clicks = sample_clicks(probs, rng)
            slate = Slate(shown, tuple(probs.tolist()), tuple(clicks.tolist()), tag)
            rows.append(LogRow(user.user_id, r, query, tuple(user.u0.tolist()), tuple(user.history),
                               tuple(user.u.tolist()), user.budget, slate, tag))
            if history is not None:
                history.update(slate)
            users[i] = model.transition(user, slate)
    return InteractionLog(rows).canonical()


def collect_oracle(world: World, prefs: PreferenceTable, name: str) -> InteractionLog:
    users = world.fresh_users()
    strategy = make_strategy(name, world, prefs)
    return collect(world, users, strategy, prefs, world.cfg.run.rounds,
                   (world.seed, COLLECT, stream_tag(name)), tag=name)


def mix_count(alpha: float, rounds: int) -> int:
    """Rounds drawn from the first log: nearest integer to alpha * rounds, ties up."""
    return int(math.floor(alpha * rounds + 0.5 + 1e-12))


def mix(log_a: InteractionLog, log_b: InteractionLog, alpha: float, rng: np.random.Generator,
        rounds: int | None = None) -> InteractionLog:
    """Per user, take a random ``alpha`` share of round indices from ``log_a``, the rest from ``log_b``.

    When the chosen source has no row for a round (the user had already left
    in that log) the user's mixed history ends there, so round indices stay
    contiguous.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ContractViolation(f"mix ratio must lie in [0, 1], got {alpha}")
    a, b = log_a.by_user(), log_b.by_user()
    if set(a) != set(b):
        raise ContractViolation("logs cover different user populations",
                                only_a=len(set(a) - set(b)), only_b=len(set(b) - set(a)))
    if rounds is None:
        rounds = max((r.round for r in [*log_a, *log_b]), default=0)
    rows = []
    for user_id in sorted(a):
        ra = {r.round: r for r in a[user_id]}
        rb = {r.round: r for r in b[user_id]}
        take_a = set((rng.permutation(rounds)[:mix_count(alpha, rounds)] + 1).tolist())
        for r in range(1, rounds + 1):
            row = (ra if r in take_a else rb).get(r)
            if row is None:
                break
            rows.append(row)
    return InteractionLog(rows)
