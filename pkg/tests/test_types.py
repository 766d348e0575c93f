import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manipsim.errors import ContractViolation, StageOrderError
from manipsim.types import (Document, DocumentSet, InteractionLog, LogRow, PreferenceTable, Slate,
                            UserState, validate_log)


def row(user, rnd, docs=(0, 1), probs=(0.5, 0.2), clicks=(1, 0), source="a"):
    return LogRow(user, rnd, "global", (0.1, 0.2), (), (0.1, 0.2), None,
                  Slate(docs, probs, clicks, source), source)


def test_empty_log_is_valid():
    assert validate_log(InteractionLog()) == []


def test_round_gap_is_reported():
    problems = validate_log(InteractionLog([row(0, 1), row(0, 3)]))
    assert len(problems) == 1 and "gap" in problems[0]


def test_shape_mismatch_is_reported():
    bad = row(0, 1, docs=(0, 1), probs=(0.5,), clicks=(1, 0))
    assert any("shape" in p for p in validate_log(InteractionLog([bad])))


def test_order_and_range_violations():
    log = InteractionLog([row(1, 1), row(0, 1, probs=(1.5, 0.1))])
    problems = validate_log(log)
    assert any("order" in p for p in problems)
    assert any("outside" in p for p in problems)


def test_canonical_sorts_by_user_then_round():
    log = InteractionLog([row(1, 1), row(0, 2), row(0, 1)]).canonical()
    assert [(r.user_id, r.round) for r in log] == [(0, 1), (0, 2), (1, 1)]
    assert validate_log(log) == []


def test_document_rejects_nan():
    with pytest.raises(ContractViolation):
        Document(0, (float("nan"), 0.0))


def test_document_set_duplicate_ids_and_query_index():
    with pytest.raises(ContractViolation):
        DocumentSet([Document(0, (1.0,)), Document(0, (2.0,))])
    ds = DocumentSet([Document(0, (1.0,)), Document(1, (2.0,))], {"a": [0], "b": [1]})
    assert ds.for_query("b") == (1,)
    with pytest.raises(ContractViolation):
        DocumentSet([Document(0, (1.0,)), Document(1, (2.0,))], {"a": [0, 1], "b": [1]})


def test_observable_view_hides_hidden_attributes():
    ds = DocumentSet([Document(0, (1.0, 0.0), (0.7,)), Document(1, (0.0, 1.0), (0.2,))])
    view = ds.observable()
    assert view.dim == 2
    np.testing.assert_array_equal(view.attrs([1, 0]), [[0.0, 1.0], [1.0, 0.0]])
    assert not hasattr(view, "hidden")


def test_user_state_starts_at_u0_and_resets():
    u = UserState(3, [0.2, 0.4], budget=2.0)
    assert np.array_equal(u.u, u.u0)
    u.u[0] = 0.9
    u.budget, u.exited = -1.0, True
    fresh = u.reset()
    assert np.array_equal(fresh.u, [0.2, 0.4]) and fresh.budget == 2.0 and not fresh.exited
    assert UserState(0, [0.1], budget=0.0).exited


def test_observe_exposes_no_hidden_state():
    u = UserState(1, [0.3], budget=5.0, history=[4])
    obs = u.observe()
    assert obs.features == (0.3,) and obs.history == (4,)
    assert not hasattr(obs, "u") and not hasattr(obs, "budget")


floats01 = st.floats(0, 1, allow_nan=False)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 4), floats01, floats01, st.integers(0, 1)),
                max_size=12))
def test_log_jsonl_round_trip(entries):
    rows = [row(u, r, probs=(p, q), clicks=(c, 1 - c)) for u, r, p, q, c in entries]
    log = InteractionLog(rows)
    assert InteractionLog.from_jsonl(log.to_jsonl()) == log


@given(st.lists(floats01, min_size=1, max_size=6), st.floats(0.1, 10), st.lists(st.integers(0, 9), max_size=4))
def test_user_state_round_trip(u0, budget, history):
    u = UserState(7, u0, budget=budget, history=history)
    again = UserState.from_dict(json.loads(json.dumps(u.to_dict())))
    assert again == u


@given(st.lists(st.lists(st.floats(0, 1, allow_nan=False), min_size=3, max_size=3), min_size=1, max_size=5))
def test_preference_table_csv_round_trip(rows):
    table = PreferenceTable(range(len(rows)), [10, 11, 12], np.array(rows))
    assert PreferenceTable.from_csv(table.to_csv()) == table


def test_preference_table_header_and_completeness():
    table = PreferenceTable([0], [0, 1], np.array([[0.5, np.nan]]))
    assert table.to_csv().splitlines()[0] == "user_id,doc_id,score"
    ds = DocumentSet([Document(0, (1.0,)), Document(1, (2.0,))])
    assert not table.is_complete([0], ds)
    with pytest.raises(StageOrderError):
        table.require_complete([0], ds)
    with pytest.raises(StageOrderError):
        table[5, 0]


def test_document_set_round_trip(example_docs):
    assert DocumentSet.from_dict(json.loads(json.dumps(example_docs.to_dict()))) == example_docs
