"""Simulated users: click models and preference transitions.

Two concrete models are provided:

* :class:`RRMSlateModel` -- transportation choice under random regret
  minimisation, with per-position examination. Produces the decoy effect.
* :class:`SequentialTopicModel` -- topic preferences that drift toward what
  the user clicks, and a time budget drained more slowly by high-quality items.

Both follow the :class:`ActionModel` contract: a pure function from (user
feature, displayed list) to per-position click probabilities, plus a
deterministic transition applied after clicks are sampled.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ContractViolation
from .types import GLOBAL_QUERY, Document, DocumentSet, Slate, UserState

# worked example group: (traveling time, price) of d1..d4
EXAMPLE_GROUP = ((0.8, 0.2), (1.0, 0.4), (0.1, 0.8), (0.45, 0.5))


class ActionModel(abc.ABC):
    """Contract every simulated user model satisfies."""

    docs: DocumentSet

    @abc.abstractmethod
    def slate_probs(self, u: np.ndarray, slate: Sequence[int], q: str | None = None) -> np.ndarray:
        """Click probability of every position of ``slate`` for user feature ``u``."""

    def click_prob(self, u, doc_id: int, slate: Sequence[int], q=None) -> float:
        return float(self.slate_probs(u, slate, q)[list(slate).index(doc_id)])

    def batch_slate_probs(self, u, slates, q=None) -> np.ndarray:
        slates = np.asarray(slates)
        if slates.size == 0:
            return np.zeros(slates.shape, dtype=np.float64)
        return np.stack([self.slate_probs(u, s, q) for s in slates])

    def singleton_probs(self, u, doc_ids: Sequence[int], q=None) -> np.ndarray:
        """Click probability of each document shown alone: the preference score."""
        ids = np.asarray(doc_ids).reshape(-1, 1)
        return self.batch_slate_probs(u, ids, q)[:, 0]

    def transition(self, user: UserState, slate: Slate) -> UserState:
        """Post-round user state. The default keeps preferences fixed."""
        new = user.copy()
        new.history.extend(d for d, c in zip(slate.docs, slate.clicks) if c)
        return new


# ---------------------------------------------------------------------------
# random regret minimisation (slate scenario)


@dataclass(frozen=True)
class RRMParams:
    log_no_choice: float = -1.0
    exam_probs: tuple[float, ...] = (1.0, 0.8, 0.6)
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "exam_probs", tuple(float(w) for w in self.exam_probs))
        if any(not 0.0 <= w <= 1.0 for w in self.exam_probs):
            raise ConfigError("examination probabilities must lie in [0, 1]",
                              key="slate.exam_probs")
        if self.epsilon != 0.0:
            raise ConfigError("regret noise is fixed at zero", key="slate.epsilon")

    def exam_for(self, size: int) -> tuple[float, ...]:
        if size > len(self.exam_probs):
            raise ConfigError(f"slate of size {size} but only {len(self.exam_probs)} "
                              "examination probabilities configured", key="slate.exam_probs")
        return self.exam_probs[:size]


def _ids(docs: Sequence[Document]) -> list[int]:
    return [d.id for d in docs]


def rrm_regret(d_i: Document, examined: Sequence[Document]) -> float:
    """Summed attribute-wise regret of choosing ``d_i`` over the other examined docs."""
    if d_i.id not in _ids(examined):
        raise ContractViolation(f"document {d_i.id} is not in the examined set")
    total = 0.0
    for d_j in examined:
        if d_j.id == d_i.id:
            continue
        for a, b in zip(d_i.attrs, d_j.attrs):
            total += max(a - b, 0.0)
    return total


def rrm_choice_prob(d_i: Document, examined: Sequence[Document], params: RRMParams = RRMParams()) -> float:
    """Probability of choosing ``d_i`` from the examined set (no-choice has log-weight L)."""
    if not examined:
        raise ContractViolation("examined set is empty")
    if d_i.id not in _ids(examined):
        raise ContractViolation(f"document {d_i.id} is not in the examined set")
    exp_l = math.exp(params.log_no_choice)
    if len(examined) == 1:
        util = math.exp(-sum(d_i.attrs))
        return util / (exp_l + util)
    weights = {d.id: math.exp(-rrm_regret(d, examined)) for d in examined}
    return weights[d_i.id] / (exp_l + sum(weights.values()))


def rrm_no_choice_prob(examined: Sequence[Document], params: RRMParams = RRMParams()) -> float:
    exp_l = math.exp(params.log_no_choice)
    if len(examined) == 1:
        return exp_l / (exp_l + math.exp(-sum(examined[0].attrs)))
    return exp_l / (exp_l + sum(math.exp(-rrm_regret(d, examined)) for d in examined))


def rrm_slate_prob(j: int, slate: Sequence[Document], params: RRMParams = RRMParams()) -> float:
    """Click probability at 1-based position ``j`` after marginalising examination."""
    if len(slate) != len(params.exam_probs):
        raise ConfigError(f"slate of size {len(slate)} but {len(params.exam_probs)} "
                          "examination probabilities", key="slate.exam_probs")
    if not 1 <= j <= len(slate):
        raise ContractViolation(f"position {j} outside slate of size {len(slate)}")
    attrs = np.array([d.attrs for d in slate], dtype=np.float64)
    return float(kernels.rrm_slate_probs(attrs, params.exam_probs, params.log_no_choice)[j - 1])


class RRMSlateModel(ActionModel):
    """Decoy-prone slate user. Ignores the user feature: all users are alike."""

    def __init__(self, docs: DocumentSet, params: RRMParams = RRMParams()):
        self.docs = docs
        self.params = params

    def slate_probs(self, u, slate, q=None) -> np.ndarray:
        exam = self.params.exam_for(len(slate))
        return kernels.rrm_slate_probs(self.docs.attrs(slate), exam, self.params.log_no_choice)

    def batch_slate_probs(self, u, slates, q=None) -> np.ndarray:
        slates = np.asarray(slates, dtype=np.int64)
        if slates.size == 0:
            return np.zeros(slates.shape, dtype=np.float64)
        exam = self.params.exam_for(slates.shape[1])
        attrs = self.docs.attrs(slates.ravel().tolist()).reshape(slates.shape + (-1,))
        return kernels.rrm_batch_slate_probs(attrs, exam, self.params.log_no_choice)


class IndependentClickModel(ActionModel):
    """Order-independent stub: each document has a fixed click probability.

    Stands in for data-driven click models when testing the action-model
    interface, and is the no-position-bias reference.
    """

    def __init__(self, docs: DocumentSet, probs: dict[int, float] | None = None):
        self.docs = docs
        if probs is None:
            probs = {d.id: 1.0 / (1.0 + math.exp(sum(d.attrs))) for d in docs}
        self.probs = dict(probs)

    def slate_probs(self, u, slate, q=None) -> np.ndarray:
        return np.array([self.probs[d] for d in slate], dtype=np.float64)


# ---------------------------------------------------------------------------
# topic / budget model (sequential scenario)


@dataclass(frozen=True)
class SeqModelParams:
    n_topics: int = 10
    docs_per_topic: int = 10
    quality_means: tuple[float, ...] | None = None  # default: evenly spaced on [0, 1]
    quality_std: float = 0.1
    initial_budget: float = 8.0
    budget_cost_base: float = 1.0
    quality_bonus: float = 0.8
    cost_floor: float = 0.1
    click_sharpness: float = 4.0
    drift_rate: float = 0.2

    def __post_init__(self):
        if self.quality_means is None:
            means = tuple(np.linspace(0.0, 1.0, self.n_topics).tolist()) if self.n_topics > 1 else (0.5,)
        else:
            means = tuple(float(x) for x in self.quality_means)
        object.__setattr__(self, "quality_means", means)
        if self.n_topics < 1 or self.docs_per_topic < 1:
            raise ConfigError("need at least one topic and one document per topic", key="sequential.n_topics")
        if len(means) != self.n_topics:
            raise ConfigError(f"quality_means has {len(means)} entries for {self.n_topics} topics",
                              key="sequential.quality_means")
        if self.quality_std < 0:
            raise ConfigError("quality_std must be non-negative", key="sequential.quality_std")
        if self.initial_budget <= 0:
            raise ConfigError("initial_budget must be positive", key="sequential.initial_budget")
        if self.cost_floor <= 0:
            raise ConfigError("cost_floor must be positive", key="sequential.cost_floor")
        if not 0.0 <= self.drift_rate <= 1.0:
            raise ConfigError("drift_rate must lie in [0, 1]", key="sequential.drift_rate")

    def click_cost(self, quality: float) -> float:
        return max(self.budget_cost_base - self.quality_bonus * quality, self.cost_floor)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def topic_of(doc: Document) -> int:
    return int(np.argmax(doc.attrs))


def seq_click_prob(user: UserState, doc: Document, params: SeqModelParams) -> float:
    if user.exited:
        raise ContractViolation(f"user {user.user_id} has exited")
    t = topic_of(doc)
    if not 0 <= t < params.n_topics:
        raise ContractViolation(f"topic {t} out of range")
    return float(_logistic(params.click_sharpness * (user.u[t] - 0.5)))


def seq_transition(user: UserState, slate: Slate, docs: DocumentSet, params: SeqModelParams) -> UserState:
    """Apply drift toward clicked topics and drain the time budget."""
    if user.exited:
        raise ContractViolation(f"user {user.user_id} has exited")
    new = user.copy()
    clicked = [d for d, c in zip(slate.docs, slate.clicks) if c]
    if clicked:
        for doc_id in clicked:
            doc = docs[doc_id]
            t = topic_of(doc)
            new.u[t] = new.u[t] + params.drift_rate * (1.0 - new.u[t])
            new.budget -= params.click_cost(doc.hidden[0])
    else:
        new.budget -= params.budget_cost_base
    new.history.extend(clicked)
    new.exited = new.budget <= 0
    return new


class SequentialTopicModel(ActionModel):
    def __init__(self, docs: DocumentSet, params: SeqModelParams = SeqModelParams()):
        self.docs = docs
        self.params = params
        self._topics = np.argmax(docs.attrs(docs.ids), axis=1)
        self._topic_by_id = dict(zip(docs.ids, self._topics.tolist()))

    def topics(self, doc_ids: Sequence[int]) -> np.ndarray:
        return np.array([self._topic_by_id[d] for d in doc_ids], dtype=np.intp)

    def slate_probs(self, u, slate, q=None) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return _logistic(self.params.click_sharpness * (u[self.topics(slate)] - 0.5))

    def batch_slate_probs(self, u, slates, q=None) -> np.ndarray:
        slates = np.asarray(slates)
        if slates.size == 0:
            return np.zeros(slates.shape, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        topics = self.topics(slates.ravel().tolist()).reshape(slates.shape)
        return _logistic(self.params.click_sharpness * (u[topics] - 0.5))

    def transition(self, user, slate):
        return seq_transition(user, slate, self.docs, self.params)


# ---------------------------------------------------------------------------


def sample_clicks(probs, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw per position."""
    probs = np.asarray(probs, dtype=np.float64)
    return (rng.random(probs.shape) < probs).astype(np.int64)


def generate_slate_documents(n_groups: int, rng: np.random.Generator) -> DocumentSet:
    """Groups of four transportation options (d1..d4), half of them h/m-swapped.

    Each group is bound to its own query key ``g000``, ``g001``, ...; the
    swapped copies of the first half follow the sampled groups.
    """
    if n_groups < 2 or n_groups % 2:
        raise ConfigError(f"n_groups must be a positive even number, got {n_groups}",
                          key="slate.n_groups")
    half = n_groups // 2
    sampled = []
    for _ in range(half):
        h1 = 0.5 + rng.uniform(0.0, 0.5)
        m1 = 1.0 - h1
        h2 = h1 + rng.uniform(0.0, 0.1)
        m2 = m1 + rng.uniform(0.0, 0.1)
        h3 = max(1.0 - h1 - rng.uniform(0.0, 0.1), 0.0)
        m3 = max(1.0 - m1 - rng.uniform(0.0, 0.1), 0.0)
        h4 = (h1 + h3) / 2
        m4 = (m1 + m3) / 2
        sampled.append(((h1, m1), (h2, m2), (h3, m3), (h4, m4)))
    swapped = [tuple((m, h) for h, m in group) for group in sampled]
    return group_document_set(sampled + swapped)


def group_document_set(groups: Sequence[Sequence[Sequence[float]]]) -> DocumentSet:
    docs, index = [], {}
    for g, group in enumerate(groups):
        key = f"g{g:03d}"
        index[key] = []
        for attrs in group:
            doc_id = len(docs)
            docs.append(Document(doc_id, tuple(attrs)))
            index[key].append(doc_id)
    return DocumentSet(docs, index)


def generate_sequential_world(params: SeqModelParams, n_users: int,
                              rng: np.random.Generator) -> tuple[DocumentSet, list[UserState]]:
    """Topic documents with hidden Gaussian quality, and uniformly random users."""
    docs = []
    eye = np.eye(params.n_topics)
    for t in range(params.n_topics):
        quality = params.quality_means[t] + params.quality_std * rng.standard_normal(params.docs_per_topic)
        for j in range(params.docs_per_topic):
            docs.append(Document(t * params.docs_per_topic + j, tuple(eye[t]), (float(quality[j]),)))
    u0 = rng.uniform(0.0, 1.0, size=(n_users, params.n_topics))
    users = [UserState(i, u0[i], q=GLOBAL_QUERY, budget=params.initial_budget) for i in range(n_users)]
    return DocumentSet(docs), users
