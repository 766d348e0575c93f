"""Trained rankers wrapped in the strategy interface."""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from ..metrics import rank_by_score
from ..oracles import RankContext, Strategy, check_enumerable
from ..types import ObservableDocs, ObservedUser
from .features import extract
from .model import RankerModel, sigmoid


class RankerPolicy(Strategy):
    """Ranks from observable inputs only (``user.observe()``).

    Point-wise and history rankers sort the recall list by score. The
    slate-aware ranker searches the ``k``-subsets of the recall list for the
    highest predicted slate CTR, then orders the winner by each document's
    score in the context of the others.
    """

    def __init__(self, model: RankerModel, docs: ObservableDocs, name: str | None = None):
        self.model = model
        self.docs = docs
        self.name = name or model.kind
        self.flagged = 0

    def rank(self, user, recall, k, ctx=RankContext()):
        obs = user.observe()
        if self.model.kind == "slate-aware":
            return self.search(obs, recall, k)
        ids = list(recall)
        return tuple(rank_by_score(ids, self.model.score(extract(self.model.spec, obs, self.docs, ids)))[:k])

    def slate_value(self, obs: ObservedUser, slate: Sequence[int]) -> float:
        """Predicted expected clicks of a displayed slate."""
        X = extract(self.model.spec, obs, self.docs, list(slate))
        return float(sigmoid(self.model.score(X)).sum())

    def search(self, obs: ObservedUser, recall: Sequence[int], k: int) -> tuple[int, ...]:
        check_enumerable(len(recall))
        subsets = list(itertools.combinations(sorted(recall), k))
        if len(subsets) == 1:
            best = subsets[0]
            scores = self.model.score(extract(self.model.spec, obs, self.docs, best))
        else:
            X = np.vstack([extract(self.model.spec, obs, self.docs, s) for s in subsets])
            all_scores = self.model.score(X).reshape(len(subsets), k)
            i = int(np.argmax(sigmoid(all_scores).sum(axis=1)))
            best, scores = subsets[i], all_scores[i]
        return tuple(rank_by_score(list(best), scores))
