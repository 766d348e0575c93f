"""Documents, users and the true user model for one scenario and seed."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..action_models import (ActionModel, RRMSlateModel, SequentialTopicModel, generate_sequential_world,
                             generate_slate_documents)
from ..config import ScenarioConfig
from ..errors import ConfigError
from ..types import GLOBAL_QUERY, DocumentSet, PreferenceTable, UserState

# stream tags for np.random.default_rng([seed, TAG, ...])
WORLD, HELDOUT, COLLECT, MIX, EVAL, BIAS = 0, 1, 2, 3, 4, 5


@dataclass
class World:
    cfg: ScenarioConfig
    seed: int
    docs: DocumentSet
    users: list[UserState]

    @property
    def model(self) -> ActionModel:
        if not hasattr(self, "_model"):
            if self.cfg.is_slate:
                self._model = RRMSlateModel(self.docs, self.cfg.rrm_params())
            else:
                self._model = SequentialTopicModel(self.docs, self.cfg.seq_params())
        return self._model

    def fresh_users(self) -> list[UserState]:
        return [u.reset() for u in self.users]

    def to_dict(self) -> dict:
        return {"scenario": self.cfg.scenario, "seed": self.seed, "docs": self.docs.to_dict(),
                "users": [u.to_dict() for u in self.users]}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path, cfg: ScenarioConfig) -> "World":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d["scenario"] != cfg.scenario:
            raise ConfigError(f"world file is for scenario {d['scenario']!r}", key="scenario")
        return cls(cfg, int(d["seed"]), DocumentSet.from_dict(d["docs"]),
                   [UserState.from_dict(u) for u in d["users"]])


def _slate_users(n: int, dim: int, rng: np.random.Generator) -> list[UserState]:
    feats = rng.uniform(0.0, 1.0, size=(n, dim))
    return [UserState(i, feats[i], q=GLOBAL_QUERY) for i in range(n)]


def build_world(cfg: ScenarioConfig, seed: int) -> World:
    rng = np.random.default_rng([seed, WORLD])
    if cfg.is_slate:
        docs = generate_slate_documents(cfg.slate.n_groups, rng)
        users = _slate_users(cfg.run.n_users, cfg.slate.user_dim, rng)
    else:
        docs, users = generate_sequential_world(cfg.seq_params(), cfg.run.n_users, rng)
    return World(cfg, seed, docs, users)


def heldout_users(world: World) -> list[UserState]:
    """A second population drawn from the same distribution, ids after the first."""
    cfg, n = world.cfg, len(world.users)
    rng = np.random.default_rng([world.seed, HELDOUT])
    if cfg.is_slate:
        users = _slate_users(n, cfg.slate.user_dim, rng)
    else:
        _, users = generate_sequential_world(cfg.seq_params(), n, rng)
    for u in users:
        u.user_id += n
    return users


def compute_initial_preferences(users: Sequence[UserState], docs: DocumentSet,
                                model: ActionModel) -> PreferenceTable:
    """Singleton-slate click probability of every document for every user at round 0.

    Users are read, never modified; each user is scored on the documents
    bound to its query (all documents for the global query).
    """
    ids = list(docs.ids)
    scores = np.full((len(users), len(ids)), np.nan)
    col = {d: j for j, d in enumerate(ids)}
    for i, user in enumerate(users):
        bound = ids if user.q == GLOBAL_QUERY else list(docs.for_query(user.q))
        cols = [col[d] for d in bound]
        scores[i, cols] = model.singleton_probs(user.u0, bound)
    return PreferenceTable([u.user_id for u in users], ids, scores)
