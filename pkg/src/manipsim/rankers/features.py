"""Feature extraction for the trainable rankers.

Inputs are restricted to :class:`ObservedUser` and :class:`ObservableDocs`;
hidden document quality and the user's current preferences never reach here.

Blocks, in order:

``user``        observable user profile
``doc``         observable document attributes
``user*doc``    element-wise cross, when both have the same width
``ctx_*``       slate-aware only: mean / min of the other displayed docs
``hist*``       history kinds: EMA of clicked-document attributes and its
                cross with the doc
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from ..types import ObservableDocs, ObservedUser

KINDS = ("pointwise", "slate-aware", "history-static", "history-dynamic")


@dataclass(frozen=True)
class FeatureSpec:
    kind: str
    user_dim: int
    doc_dim: int
    slate_size: int
    ema_decay: float = 0.8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown ranker kind {self.kind!r}; expected one of {KINDS}",
                              key="model")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in [0, 1)", key="train.ema_decay")

    @property
    def cross(self) -> bool:
        return self.user_dim > 0 and self.user_dim == self.doc_dim

    @property
    def uses_history(self) -> bool:
        return self.kind in ("history-static", "history-dynamic")

    @property
    def blocks(self) -> list[tuple[str, int]]:
        out = [("user", self.user_dim), ("doc", self.doc_dim)]
        if self.cross:
            out.append(("user*doc", self.doc_dim))
        if self.kind == "slate-aware":
            out += [("ctx_mean", self.doc_dim), ("ctx_min", self.doc_dim)]
        if self.uses_history:
            out += [("hist", self.doc_dim), ("hist*doc", self.doc_dim)]
        return out

    @property
    def dim(self) -> int:
        return sum(n for _, n in self.blocks)

    def to_dict(self) -> dict:
        return asdict(self)


def history_embedding(history: Sequence[int], docs: ObservableDocs, decay: float) -> np.ndarray:
    emb = np.zeros(docs.dim)
    if len(history):
        for a in docs.attrs(list(history)):
            emb = decay * emb + (1.0 - decay) * a
    return emb


def extract(spec: FeatureSpec, user: ObservedUser, docs: ObservableDocs,
            doc_ids: Sequence[int], hist: np.ndarray | None = None) -> np.ndarray:
    """Feature rows for ``doc_ids``.

    For the slate-aware kind each row also summarises the other documents of
    ``doc_ids``; for the other kinds rows are independent of each other.
    """
    n = len(doc_ids)
    attrs = docs.attrs(list(doc_ids))
    ufeat = np.broadcast_to(np.asarray(user.features, dtype=np.float64), (n, spec.user_dim))
    parts = [ufeat, attrs]
    if spec.cross:
        parts.append(ufeat * attrs)
    if spec.kind == "slate-aware":
        if n > spec.slate_size:
            raise ConfigError(f"slate of {n} documents exceeds configured size {spec.slate_size}")
        if n > 1:
            mean_other = (attrs.sum(axis=0) - attrs) / (n - 1)
            min_other = np.empty_like(attrs)
            for i in range(n):
                min_other[i] = np.delete(attrs, i, axis=0).min(axis=0)
        else:
            mean_other = np.zeros_like(attrs)
            min_other = np.zeros_like(attrs)
        parts += [mean_other, min_other]
    if spec.uses_history:
        if hist is None:
            history = user.history if spec.kind == "history-dynamic" else user.initial_history
            hist = history_embedding(history, docs, spec.ema_decay)
        h = np.broadcast_to(hist, (n, spec.doc_dim))
        parts += [h, h * attrs]
    return np.hstack(parts)


def extract_features(spec: FeatureSpec, user: ObservedUser, docs: ObservableDocs, doc_id: int,
                     context: Sequence[int] | None = None) -> np.ndarray:
    """Feature vector of a single document, optionally inside a displayed slate."""
    if spec.kind == "slate-aware" and context is not None:
        rows = extract(spec, user, docs, list(context))
        return rows[list(context).index(doc_id)]
    return extract(spec, user, docs, [doc_id])[0]
