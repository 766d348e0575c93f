"""Online and offline metrics, including the manipulation-aware ones.

Undefined values (FCTR of a slate nobody clicks, AUC with one class) are
reported as ``nan`` and skipped by the population averages.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .action_models import ActionModel
from .errors import ContractViolation
from .oracles import PermutationTable
from .types import InteractionLog, PreferenceTable

UNDEFINED = float("nan")


def ctr(probs) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0:
        raise ContractViolation("CTR of an empty list")
    return float(probs.mean())


def fctr(probs, docs: Sequence[int], favorites) -> float:
    """Share of expected clicks that land on favorite documents."""
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum()
    if total <= 0:
        return UNDEFINED
    fav = set(favorites)
    mask = np.fromiter((d in fav for d in docs), dtype=bool, count=len(docs))
    return float(probs[mask].sum() / total)


def rank_by_score(doc_ids: Sequence[int], scores) -> list[int]:
    """Documents by descending score, lower id first on ties."""
    s = dict(zip(doc_ids, np.asarray(scores).tolist()))
    return sorted(doc_ids, key=lambda d: (-s[d], d))


def favorite_set(doc_ids: Sequence[int], scores, k: int) -> tuple[int, ...]:
    """The ``k`` highest-scoring documents, sorted by descending score."""
    if not 1 <= k <= len(doc_ids):
        raise ContractViolation(f"favorite set size {k} out of range for {len(doc_ids)} documents")
    return tuple(rank_by_score(doc_ids, scores)[:k])


def least_favorite(doc_ids: Sequence[int], scores) -> int:
    return rank_by_score(doc_ids, scores)[-1]


@dataclass(frozen=True)
class ManiScoreReport:
    fctr_d: float
    ctr_d: float
    fctr_u: float
    ctr_u: float
    satisfaction_term: float
    revenue_term: float
    score: float
    unbiased_flag: bool
    n_unbiased: int


def _relative_gain(hi: float, lo: float) -> float:
    denom = hi + lo
    if not math.isfinite(hi) or not math.isfinite(lo) or denom <= 0:
        return 0.0
    return max((hi - lo) / denom, 0.0)


def maniscore(slate: Sequence[int], u0, model: ActionModel, favorites,
              recall: Sequence[int] | None = None) -> ManiScoreReport:
    """Compare ``slate`` against every unbiased ordering of the same documents."""
    slate = tuple(int(d) for d in slate)
    if recall is not None and not set(slate) <= set(recall):
        raise ContractViolation("evaluated slate is not drawn from the recall list")
    table = PermutationTable.build(u0, slate, model)
    mask, flagged = table.unbiased_mask()
    ctrs = table.probs.mean(axis=1)
    fctrs = np.array([fctr(p, perm, favorites) for p, perm in zip(table.probs, table.perms.tolist())])
    row = int(np.flatnonzero((table.perms == np.array(slate)).all(axis=1))[0])
    fctr_u_vals = fctrs[mask]
    fctr_u_vals = fctr_u_vals[~np.isnan(fctr_u_vals)]
    fctr_u = float(fctr_u_vals.min()) if fctr_u_vals.size else UNDEFINED
    ctr_u = float(ctrs[mask].max())
    fctr_d, ctr_d = float(fctrs[row]), float(ctrs[row])
    sat = _relative_gain(fctr_u, fctr_d)
    rev = _relative_gain(ctr_d, ctr_u)
    return ManiScoreReport(fctr_d, ctr_d, fctr_u, ctr_u, sat, rev, math.exp(sat + rev),
                           flagged, int(mask.sum()) if not flagged else 0)


def rbo_similarity(list_a: Sequence, list_b: Sequence, p: float = 0.9, k: int | None = None) -> float:
    """Rank-biased overlap truncated at depth ``k``, normalised so identical lists give 1."""
    if not 0.0 < p < 1.0:
        raise ContractViolation(f"persistence p must lie in (0, 1), got {p}")
    if len(list_a) != len(list_b):
        raise ContractViolation(f"lists differ in length: {len(list_a)} vs {len(list_b)}")
    k = len(list_a) if k is None else k
    if k < 1 or k > len(list_a):
        raise ContractViolation(f"depth {k} out of range")
    seen_a, seen_b = set(), set()
    overlap = 0
    num = den = 0.0
    weight = 1.0
    for d in range(1, k + 1):
        x, y = list_a[d - 1], list_b[d - 1]
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_b) + (y in seen_a)
        seen_a.add(x)
        seen_b.add(y)
        num += weight * overlap / d
        den += weight
        weight *= p
    return num / den


def preference_list(u, doc_ids: Sequence[int], model: ActionModel, k: int) -> tuple[int, ...]:
    return favorite_set(doc_ids, model.singleton_probs(u, doc_ids), k)


def preference_shift(u_r, u0, doc_ids: Sequence[int], model: ActionModel, k: int = 5,
                     p: float = 0.9, initial: Sequence[int] | None = None) -> float:
    """One minus the RBO between the initial and current top-``k`` preference lists."""
    base = tuple(initial) if initial is not None else preference_list(u0, doc_ids, model, k)
    now = preference_list(u_r, doc_ids, model, k)
    return 1.0 - rbo_similarity(base, now, p, k)


@dataclass(frozen=True)
class PositionStats:
    favorite_position: float
    least_favorite_position: float
    favorite_slates: int
    favorite_missing: int
    least_slates: int
    least_missing: int


def position_stats(log: InteractionLog, prefs: PreferenceTable, query_docs) -> PositionStats:
    """Average 1-based slate position of each user's favorite and least favorite item.

    ``query_docs`` maps a query key to the documents bound to it; favorites
    are taken among those.
    """
    cache: dict[tuple[int, str], tuple[int, int]] = {}
    fav_pos, least_pos = [], []
    fav_missing = least_missing = 0
    for row in log:
        key = (row.user_id, row.query)
        if key not in cache:
            ids = list(query_docs(row.query))
            scores = prefs.row(row.user_id, ids)
            ranked = rank_by_score(ids, scores)
            cache[key] = (ranked[0], ranked[-1])
        fav, least = cache[key]
        docs = row.slate.docs
        if fav in docs:
            fav_pos.append(docs.index(fav) + 1)
        else:
            fav_missing += 1
        if least in docs:
            least_pos.append(docs.index(least) + 1)
        else:
            least_missing += 1
    mean = lambda xs: float(np.mean(xs)) if xs else UNDEFINED  # noqa: E731
    return PositionStats(mean(fav_pos), mean(least_pos), len(fav_pos), fav_missing,
                         len(least_pos), least_missing)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def offline_auc(predictions, labels) -> float:
    """ROC-AUC through the Mann-Whitney rank statistic (ties count one half)."""
    pred = np.asarray(predictions, dtype=np.float64)
    lab = np.asarray(labels).astype(bool)
    if pred.size == 0 or pred.shape != lab.shape:
        raise ContractViolation("predictions and labels must be non-empty and aligned")
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return UNDEFINED
    ranks = _average_ranks(pred)
    return float((ranks[lab].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def offline_ndcg(ranked_labels) -> float:
    """NDCG of one ranked list with binary gains and log2 discounts."""
    rel = np.asarray(ranked_labels, dtype=np.float64)
    if rel.size == 0:
        raise ContractViolation("NDCG of an empty list")
    disc = 1.0 / np.log2(np.arange(2, rel.size + 2))
    ideal = float((np.sort(rel)[::-1] * disc).sum())
    if ideal == 0:
        return UNDEFINED
    return float((rel * disc).sum() / ideal)


def mean_ndcg(groups: Iterable[Sequence[float]]) -> float:
    vals = [v for v in (offline_ndcg(g) for g in groups) if not math.isnan(v)]
    return float(np.mean(vals)) if vals else UNDEFINED


def nanmean(values) -> float:
    arr = np.asarray(list(values), dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    return float(arr.mean()) if arr.size else UNDEFINED


@dataclass
class MetricReport:
    policy: str
    scenario: str
    mix_ratio: float | None
    seed: int
    ctr: float
    fctr: float
    maniscore: float
    ps: float
    favorite_position: float
    least_favorite_position: float
    offline_auc: float = UNDEFINED
    offline_ndcg: float = UNDEFINED
    n_users: int = 0
    n_rows: int = 0
    n_flagged: int = 0
    status: str = "ok"
    curves: dict[str, list[float]] = field(default_factory=dict)

    CSV_FIELDS = ("policy", "scenario", "mix_ratio", "seed", "ctr", "fctr", "maniscore", "ps",
                  "favorite_position", "least_favorite_position", "offline_auc", "offline_ndcg",
                  "n_users", "n_rows", "n_flagged", "status")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)

    def csv_row(self) -> list[str]:
        out = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            out.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
        return out
