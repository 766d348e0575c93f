import json

import numpy as np
import pytest

from manipsim.config import loads
from manipsim.errors import ContractViolation, StageOrderError, VerificationError
from manipsim.oracles import is_unbiased
from manipsim.pipeline import sweep, verify
from manipsim.pipeline.evaluation import evaluate
from manipsim.pipeline.stages import (ClickHistory, collect, collect_oracle, make_strategy, mix, mix_count,
                                      sample_recall, slate_group_recall)
from manipsim.pipeline.world import COLLECT, build_world, compute_initial_preferences
from manipsim.types import Slate

SLATE = "[run]\nn_users = 30\n[slate]\nn_groups = 10\n"
SEQ = 'scenario = "synthetic-sequential"\n[run]\nn_users = 30\n'


def world_and_prefs(text, seed=0):
    world = build_world(loads(text), seed)
    return world, compute_initial_preferences(world.users, world.docs, world.model)


def test_group_recall_lists_are_equally_likely():
    world, _ = world_and_prefs(SLATE)
    rng = np.random.default_rng(0)
    first = 0
    n = 20_000
    for _ in range(n):
        q, recall = slate_group_recall(world.docs, rng)
        d1, d2, d3, d4 = world.docs.for_query(q)
        assert recall in ([d1, d2, d3], [d1, d3, d4])
        first += recall == [d1, d2, d3]
    assert abs(first / n - 0.5) < 0.02


def test_ctr_weighted_recall_is_uniform_under_equal_history():
    ids = list(range(10))
    hist = ClickHistory(ids)
    hist.update(Slate(tuple(ids), (0.5,) * 10, (1,) * 10))
    rng = np.random.default_rng(1)
    counts = np.zeros(10)
    for _ in range(5000):
        counts[sample_recall(ids, "ctr-weighted", 3, rng, hist)] += 1
    np.testing.assert_allclose(counts / counts.sum(), 0.1, atol=0.01)


def test_ctr_weighted_recall_follows_clicks():
    ids = list(range(4))
    hist = ClickHistory(ids)
    for _ in range(50):
        hist.update(Slate((0, 1), (0.5, 0.5), (1, 0)))
    rng = np.random.default_rng(2)
    picks = [sample_recall(ids, "ctr-weighted", 1, rng, hist)[0] for _ in range(2000)]
    assert picks.count(0) > picks.count(1)


def test_collect_edge_cases():
    world, prefs = world_and_prefs(SLATE)
    strat = make_strategy("greedy", world, prefs)
    assert len(collect(world, world.fresh_users(), strat, prefs, 0, (0, COLLECT))) == 0

    world, prefs = world_and_prefs(SEQ + "[sequential]\ninitial_budget = 0.05\n")
    log = collect_oracle(world, prefs, "unbiased")
    assert len(log) == len(world.users)
    assert all(r.round == 1 for r in log)


def test_unbiased_collection_shows_unbiased_slates():
    world, prefs = world_and_prefs(SLATE)
    log = collect_oracle(world, prefs, "unbiased")
    assert len(log) == 30 * 10
    for row in log:
        probs = world.model.slate_probs(world.users[row.user_id].u0, row.slate.docs)
        assert is_unbiased(probs)


def test_collection_is_reproducible_and_keeps_users_fresh():
    world, prefs = world_and_prefs(SEQ)
    before = [u.to_dict() for u in world.users]
    a = collect_oracle(world, prefs, "planner")
    b = collect_oracle(world, prefs, "planner")
    assert a.to_jsonl() == b.to_jsonl()
    assert [u.to_dict() for u in world.users] == before


def test_mix_endpoints_and_shares():
    world, prefs = world_and_prefs(SLATE)
    greedy = collect_oracle(world, prefs, "greedy")
    unbiased = collect_oracle(world, prefs, "unbiased")
    rng = np.random.default_rng(0)
    assert mix(greedy, unbiased, 0.0, rng).to_jsonl() == unbiased.to_jsonl()
    assert mix(greedy, unbiased, 1.0, rng).to_jsonl() == greedy.to_jsonl()
    half = mix(greedy, unbiased, 0.5, rng)
    assert len(half) == len(greedy)
    for rows in half.by_user().values():
        tags = [r.slate.strategy_tag for r in rows]
        assert tags.count("greedy") == 5 and tags.count("unbiased") == 5
        assert [r.round for r in rows] == list(range(1, 11))
    assert mix_count(0.25, 10) == 3 and mix_count(0.24, 10) == 2


def test_mix_rejects_mismatched_logs():
    world, prefs = world_and_prefs(SLATE)
    a = collect_oracle(world, prefs, "greedy")
    with pytest.raises(ContractViolation):
        mix(a, type(a)([r for r in a if r.user_id != 0]), 0.5, np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        mix(a, a, 1.2, np.random.default_rng(0))


def test_evaluation_is_deterministic_and_isolated():
    world, prefs = world_and_prefs(SEQ)
    policy = make_strategy("unbiased", world, prefs)
    log1, rep1 = evaluate(world, prefs, policy)
    log2, rep2 = evaluate(world, prefs, policy)
    assert log1.to_jsonl() == log2.to_jsonl()
    assert json.dumps(rep1.to_dict()) == json.dumps(rep2.to_dict())

    # a user's trajectory does not depend on who else is evaluated
    small, small_prefs = world_and_prefs(SEQ.replace("30", "5"))
    log3, _ = evaluate(small, small_prefs, make_strategy("unbiased", small, small_prefs))
    for uid, rows in log3.by_user().items():
        full = log1.by_user()[uid]
        assert [r.to_dict() for r in rows] == [r.to_dict() for r in full]


def test_report_shapes():
    world, prefs = world_and_prefs(SEQ)
    _, rep = evaluate(world, prefs, make_strategy("unbiased", world, prefs))
    assert rep.n_users == 30
    assert len(rep.curves["ctr"]) == 20
    assert 0 <= rep.fctr <= 1 and 0 <= rep.ps <= 1 and 0 <= rep.ctr <= 1


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = loads(SLATE + "[train]\nepochs = 2\n")
    reports = sweep(cfg, out, ratios=[0.0, 1.0], models=["pointwise", "slate-aware"], seeds=[0, 1])
    return out, reports


def test_sweep_reports_every_cell(small_sweep):
    out, reports = small_sweep
    assert len(reports) == 2 * 2 * 2
    assert all(r.status == "ok" for r in reports)
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 8
    assert {(r.policy, r.mix_ratio, r.seed) for r in reports} == {
        (m, a, s) for m in ("pointwise", "slate-aware") for a in (0.0, 1.0) for s in (0, 1)}


def test_verify_round_trips_and_catches_tampering(small_sweep, tmp_path):
    import shutil
    out, reports = small_sweep
    again = verify(out, deep=True)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in reports]

    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    ev = copy / "seed_0" / "eval_pointwise_0.0.jsonl"
    ev.write_text(ev.read_text().replace('"clicks":[0', '"clicks":[1', 1))
    with pytest.raises(VerificationError):
        verify(copy)


def test_verify_needs_a_run(tmp_path):
    with pytest.raises(StageOrderError):
        verify(tmp_path)


def test_verify_recomputes_even_when_hashes_are_refreshed(small_sweep, tmp_path):
    import shutil
    from manipsim.pipeline.rundir import RunDir
    out, _ = small_sweep
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    ev = copy / "seed_1" / "eval_slate-aware_1.0.jsonl"
    ev.write_text(ev.read_text().replace('"click_probs":[0.', '"click_probs":[0.9', 1))
    rd = RunDir(copy)
    rd.write_manifest(rd.load_manifest())
    with pytest.raises(VerificationError, match="differs"):
        verify(copy)
