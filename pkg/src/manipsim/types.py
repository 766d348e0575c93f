"""Domain types shared by every stage of the simulation.

Observable and hidden attributes live in separate vectors on purpose: rankers
only ever get an :class:`ObservableDocs` view or an :class:`ObservedUser`, so
they cannot read document quality or the user's drifting preferences.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractViolation, StageOrderError

GLOBAL_QUERY = "global"


@dataclass(frozen=True)
class Document:
    id: int
    attrs: tuple[float, ...]
    hidden: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(float(x) for x in self.attrs))
        object.__setattr__(self, "hidden", tuple(float(x) for x in self.hidden))
        if not all(math.isfinite(x) for x in self.attrs + self.hidden):
            raise ContractViolation(f"document {self.id} has non-finite attributes")

    def to_dict(self) -> dict:
        return {"id": self.id, "attrs": list(self.attrs), "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(int(d["id"]), tuple(d["attrs"]), tuple(d.get("hidden", ())))


class ObservableDocs:
    """Read-only view of a document set exposing observable attributes only."""

    def __init__(self, ids: Sequence[int], attrs: np.ndarray):
        self._row = {doc_id: i for i, doc_id in enumerate(ids)}
        self._attrs = attrs
        self._attrs.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._attrs.shape[1]

    def attrs(self, ids: Sequence[int]) -> np.ndarray:
        return self._attrs[[self._row[i] for i in ids]]


class DocumentSet:
    """All documents of a scenario plus the query → document binding."""

    def __init__(self, docs: Iterable[Document], query_index: dict[str, Sequence[int]] | None = None):
        self.docs: tuple[Document, ...] = tuple(docs)
        self._row = {}
        for i, d in enumerate(self.docs):
            if d.id in self._row:
                raise ContractViolation(f"duplicate document id {d.id}")
            self._row[d.id] = i
        if query_index is None:
            query_index = {GLOBAL_QUERY: [d.id for d in self.docs]}
        self.query_index = {q: tuple(int(i) for i in ids) for q, ids in query_index.items()}
        self._query_of = {}
        for q, ids in self.query_index.items():
            for i in ids:
                if i not in self._row:
                    raise ContractViolation(f"query {q!r} binds unknown document {i}")
                if i in self._query_of:
                    raise ContractViolation(f"document {i} bound to more than one query")
                self._query_of[i] = q
        if len(self._query_of) != len(self.docs):
            raise ContractViolation("every document must be bound to exactly one query")
        n_attr = {len(d.attrs) for d in self.docs}
        n_hidden = {len(d.hidden) for d in self.docs}
        if len(n_attr) > 1 or len(n_hidden) > 1:
            raise ContractViolation("documents disagree on attribute dimensions")
        self._attrs = np.array([d.attrs for d in self.docs], dtype=np.float64).reshape(len(self.docs), -1)
        self._hidden = np.array([d.hidden for d in self.docs], dtype=np.float64).reshape(len(self.docs), -1)
        self._attrs.setflags(write=False)
        self._hidden.setflags(write=False)

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.docs)

    def __getitem__(self, doc_id: int) -> Document:
        return self.docs[self._row[doc_id]]

    def __eq__(self, other) -> bool:
        return (isinstance(other, DocumentSet) and self.docs == other.docs
                and self.query_index == other.query_index)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(d.id for d in self.docs)

    def rows(self, ids: Sequence[int]) -> np.ndarray:
        return np.fromiter((self._row[i] for i in ids), dtype=np.intp, count=len(ids))

    def attrs(self, ids: Sequence[int]) -> np.ndarray:
        return self._attrs[self.rows(ids)]

    def hidden(self, ids: Sequence[int]) -> np.ndarray:
        return self._hidden[self.rows(ids)]

    def for_query(self, query: str) -> tuple[int, ...]:
        return self.query_index[query]

    def query_of(self, doc_id: int) -> str:
        return self._query_of[doc_id]

    def observable(self) -> ObservableDocs:
        return ObservableDocs(self.ids, self._attrs.copy())

    def to_dict(self) -> dict:
        return {"docs": [d.to_dict() for d in self.docs],
                "query_index": {q: list(ids) for q, ids in self.query_index.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentSet":
        return cls((Document.from_dict(x) for x in d["docs"]), d["query_index"])


@dataclass(frozen=True)
class ObservedUser:
    """What a ranker may see of a user: static profile and session click history."""

    user_id: int
    features: tuple[float, ...]
    history: tuple[int, ...] = ()
    initial_history: tuple[int, ...] = ()


@dataclass
class UserState:
    user_id: int
    u0: np.ndarray
    u: np.ndarray | None = None
    q: str = GLOBAL_QUERY
    budget: float | None = None  # None: no session budget (slate scenario)
    exited: bool = False
    history: list[int] = field(default_factory=list)
    initial_budget: float | None = None

    def __post_init__(self):
        self.u0 = np.array(self.u0, dtype=np.float64)
        self.u = self.u0.copy() if self.u is None else np.array(self.u, dtype=np.float64)
        if self.initial_budget is None:
            self.initial_budget = self.budget
        if self.budget is not None and self.budget <= 0:
            self.exited = True

    def observe(self) -> ObservedUser:
        return ObservedUser(self.user_id, tuple(self.u0.tolist()), tuple(self.history))

    def copy(self) -> "UserState":
        return UserState(self.user_id, self.u0.copy(), self.u.copy(), self.q, self.budget,
                         self.exited, list(self.history), self.initial_budget)

    def reset(self) -> "UserState":
        """A fresh copy back at round 0: initial features and full budget."""
        return UserState(self.user_id, self.u0.copy(), None, self.q, self.initial_budget,
                         False, [], self.initial_budget)

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "u0": self.u0.tolist(), "u": self.u.tolist(),
                "q": self.q, "budget": self.budget, "exited": self.exited,
                "history": list(self.history), "initial_budget": self.initial_budget}

    @classmethod
    def from_dict(cls, d: dict) -> "UserState":
        return cls(int(d["user_id"]), d["u0"], d["u"], d.get("q", GLOBAL_QUERY), d.get("budget"),
                   bool(d.get("exited", False)), list(d.get("history", [])),
                   d.get("initial_budget"))

    def __eq__(self, other) -> bool:
        return (isinstance(other, UserState) and self.to_dict() == other.to_dict())


@dataclass(frozen=True)
class Slate:
    docs: tuple[int, ...]
    click_probs: tuple[float, ...]
    clicks: tuple[int, ...]
    strategy_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(int(x) for x in self.docs))
        object.__setattr__(self, "click_probs", tuple(float(x) for x in self.click_probs))
        object.__setattr__(self, "clicks", tuple(int(x) for x in self.clicks))

    def to_dict(self) -> dict:
        return {"docs": list(self.docs), "click_probs": list(self.click_probs),
                "clicks": list(self.clicks), "strategy": self.strategy_tag}

    @classmethod
    def from_dict(cls, d: dict) -> "Slate":
        return cls(tuple(d["docs"]), tuple(d["click_probs"]), tuple(d["clicks"]), d.get("strategy", ""))


@dataclass(frozen=True)
class LogRow:
    """One (user, round) interaction.

    ``features`` and ``history`` are observable; ``hidden_u`` and
    ``hidden_budget`` are the user's internal state *before* the round and are
    never handed to rankers.
    """

    user_id: int
    round: int
    query: str
    features: tuple[float, ...]
    history: tuple[int, ...]
    hidden_u: tuple[float, ...]
    hidden_budget: float | None
    slate: Slate
    source: str = ""

    @property
    def observed(self) -> ObservedUser:
        return ObservedUser(self.user_id, self.features, self.history)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "round": self.round,
            "query": self.query,
            "user": {
                "observable": {"features": list(self.features), "history": list(self.history)},
                "hidden": {"u": list(self.hidden_u), "budget": self.hidden_budget},
            },
            "slate": self.slate.to_dict(),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogRow":
        obs, hid = d["user"]["observable"], d["user"]["hidden"]
        return cls(int(d["user_id"]), int(d["round"]), d["query"],
                   tuple(float(x) for x in obs["features"]), tuple(int(x) for x in obs["history"]),
                   tuple(float(x) for x in hid["u"]), hid["budget"],
                   Slate.from_dict(d["slate"]), d.get("source", ""))


class InteractionLog:
    """Append-only sequence of :class:`LogRow`, canonically ordered by (user, round)."""

    def __init__(self, rows: Iterable[LogRow] = ()):
        self.rows: list[LogRow] = list(rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[LogRow]:
        return iter(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, InteractionLog) and self.rows == other.rows

    def append(self, row: LogRow) -> None:
        self.rows.append(row)

    def canonical(self) -> "InteractionLog":
        return InteractionLog(sorted(self.rows, key=lambda r: (r.user_id, r.round)))

    def by_user(self) -> dict[int, list[LogRow]]:
        out: dict[int, list[LogRow]] = {}
        for row in self.rows:
            out.setdefault(row.user_id, []).append(row)
        return out

    def user_ids(self) -> list[int]:
        return sorted({r.user_id for r in self.rows})

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.rows)

    @classmethod
    def from_jsonl(cls, text: str) -> "InteractionLog":
        return cls(LogRow.from_dict(json.loads(line)) for line in text.splitlines() if line.strip())

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "InteractionLog":
        return cls.from_jsonl(Path(path).read_text())


def validate_log(log: InteractionLog) -> list[str]:
    """Return every invariant violation found in ``log`` (empty when valid)."""
    problems = []
    prev = None
    expected_round: dict[int, int] = {}
    for i, row in enumerate(log.rows):
        key = (row.user_id, row.round)
        if prev is not None and key <= prev:
            problems.append(f"row {i}: order violation, {key} after {prev}")
        prev = key
        want = expected_round.get(row.user_id, 1)
        if row.round != want:
            problems.append(f"row {i}: gap violation for user {row.user_id}, round {row.round} "
                            f"where {want} was expected")
        expected_round[row.user_id] = row.round + 1
        s = row.slate
        if not (len(s.docs) == len(s.click_probs) == len(s.clicks)):
            problems.append(f"row {i}: shape violation, {len(s.docs)} docs, "
                            f"{len(s.click_probs)} probs, {len(s.clicks)} clicks")
        if any(not (0.0 <= p <= 1.0) for p in s.click_probs):
            problems.append(f"row {i}: click probability outside [0, 1]")
        if any(c not in (0, 1) for c in s.clicks):
            problems.append(f"row {i}: non-binary click")
    return problems


class PreferenceTable:
    """Initial preference score of every (user, document) pair, dense."""

    def __init__(self, user_ids: Sequence[int], doc_ids: Sequence[int], scores: np.ndarray):
        self.user_ids = tuple(int(u) for u in user_ids)
        self.doc_ids = tuple(int(d) for d in doc_ids)
        self.scores = np.asarray(scores, dtype=np.float64)
        if self.scores.shape != (len(self.user_ids), len(self.doc_ids)):
            raise ContractViolation("preference score matrix has the wrong shape")
        self._urow = {u: i for i, u in enumerate(self.user_ids)}
        self._dcol = {d: j for j, d in enumerate(self.doc_ids)}

    def __getitem__(self, key: tuple[int, int]) -> float:
        user_id, doc_id = key
        try:
            return float(self.scores[self._urow[user_id], self._dcol[doc_id]])
        except KeyError:
            raise StageOrderError(f"no initial preference for user {user_id}, doc {doc_id}",
                                  user_id=user_id, doc_id=doc_id) from None

    def __eq__(self, other) -> bool:
        return (isinstance(other, PreferenceTable) and self.user_ids == other.user_ids
                and self.doc_ids == other.doc_ids and np.array_equal(self.scores, other.scores))

    def row(self, user_id: int, doc_ids: Sequence[int]) -> np.ndarray:
        try:
            r = self._urow[user_id]
            return self.scores[r, [self._dcol[d] for d in doc_ids]]
        except KeyError:
            raise StageOrderError(f"preference table incomplete for user {user_id}",
                                  user_id=user_id) from None

    def is_complete(self, user_ids: Iterable[int], docs: DocumentSet) -> bool:
        have_docs = set(self.doc_ids)
        return (all(u in self._urow for u in user_ids) and all(d in have_docs for d in docs.ids)
                and bool(np.all(np.isfinite(self.scores))))

    def require_complete(self, user_ids: Iterable[int], docs: DocumentSet) -> None:
        if not self.is_complete(user_ids, docs):
            raise StageOrderError("initial preference table is incomplete; run the prefs stage first")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user_id", "doc_id", "score"])
        for i, u in enumerate(self.user_ids):
            for j, d in enumerate(self.doc_ids):
                w.writerow([u, d, repr(float(self.scores[i, j]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PreferenceTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["user_id", "doc_id", "score"]:
            raise ContractViolation(f"unexpected preference table header {header}")
        entries = [(int(u), int(d), float(s)) for u, d, s in reader]
        users = list(dict.fromkeys(e[0] for e in entries))
        docs = list(dict.fromkeys(e[1] for e in entries))
        ur = {u: i for i, u in enumerate(users)}
        dc = {d: j for j, d in enumerate(docs)}
        scores = np.full((len(users), len(docs)), np.nan)
        for u, d, s in entries:
            scores[ur[u], dc[d]] = s
        return cls(users, docs, scores)

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "PreferenceTable":
        return cls.from_csv(Path(path).read_text())
