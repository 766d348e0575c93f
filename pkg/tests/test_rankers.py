import itertools
import math

import numpy as np
import pytest

from manipsim.action_models import IndependentClickModel, RRMSlateModel, generate_slate_documents
from manipsim.errors import ConfigError, ModelFormatError
from manipsim.rankers import (FeatureSpec, RankerModel, RankerPolicy, TrainConfig, build_impressions,
                              estimate_position_bias, evaluate_offline, split_rows, train)
from manipsim.rankers.features import extract, extract_features, history_embedding
from manipsim.rankers.mitigation import impression_weights, mitigation_weight
from manipsim.types import InteractionLog, LogRow, ObservableDocs, ObservedUser, Slate, UserState


def obs_docs(n=6, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return ObservableDocs(list(range(n)), rng.uniform(0, 1, size=(n, dim)))


def row(user, rnd, feats, docs, clicks, history=()):
    return LogRow(user, rnd, "global", tuple(feats), tuple(history), tuple(feats), None,
                  Slate(docs, (0.5,) * len(docs), clicks), "")


# -- features -----------------------------------------------------------------

def test_feature_blocks():
    assert FeatureSpec("pointwise", 2, 2, 3).blocks == [("user", 2), ("doc", 2), ("user*doc", 2)]
    assert FeatureSpec("pointwise", 3, 2, 3).dim == 5
    assert FeatureSpec("slate-aware", 2, 2, 3).dim == 10
    assert FeatureSpec("history-dynamic", 10, 10, 1).dim == 50
    with pytest.raises(ConfigError):
        FeatureSpec("deepfm", 2, 2, 3)


def test_slate_aware_context_is_order_free():
    docs = obs_docs()
    spec = FeatureSpec("slate-aware", 2, 2, 3)
    u = ObservedUser(0, (0.3, 0.7))
    a = extract_features(spec, u, docs, 1, context=[1, 2, 3])
    b = extract_features(spec, u, docs, 1, context=[3, 1, 2])
    np.testing.assert_array_equal(a, b)
    c = extract_features(spec, u, docs, 1, context=[1, 2, 4])
    assert not np.array_equal(a, c)
    with pytest.raises(ConfigError):
        extract(spec, u, docs, [0, 1, 2, 3])


def test_history_features():
    docs = obs_docs()
    assert np.all(history_embedding((), docs, 0.8) == 0)
    emb = history_embedding((2,), docs, 0.5)
    np.testing.assert_allclose(emb, 0.5 * docs.attrs([2])[0])
    dyn = FeatureSpec("history-dynamic", 2, 2, 1)
    stat = FeatureSpec("history-static", 2, 2, 1)
    u = ObservedUser(0, (0.1, 0.2), history=(2, 3))
    assert np.any(extract(dyn, u, docs, [0])[0, 6:] != 0)
    # the static kind sees only what was known before the session
    assert np.all(extract(stat, u, docs, [0])[0, 6:] == 0)


def test_pointwise_rows_are_independent():
    docs = obs_docs()
    spec = FeatureSpec("pointwise", 2, 2, 3)
    u = ObservedUser(0, (0.4, 0.5))
    np.testing.assert_array_equal(extract(spec, u, docs, [0, 1, 2])[1], extract(spec, u, docs, [1])[0])


# -- model ----------------------------------------------------------------------

def numeric_grad(model, X, y, w, l2, name, eps=1e-5):
    p = model.params[name]
    g = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        old = p[idx]
        p[idx] = old + eps
        hi = model.loss_and_grad(X, y, w, l2)[0]
        p[idx] = old - eps
        lo = model.loss_and_grad(X, y, w, l2)[0]
        p[idx] = old
        g[idx] = (hi - lo) / (2 * eps)
    return g


def gradient_check(draw: int) -> float:
    rng = np.random.default_rng([7, draw])
    spec = FeatureSpec("pointwise", 2, 2, 3)
    model = RankerModel(spec, hidden=int(rng.integers(1, 6)), seed=draw)
    for v in model.params.values():
        v[...] = rng.normal(0, 1, size=v.shape)
    n = int(rng.integers(1, 12))
    X = rng.normal(0, 1, size=(n, spec.dim))
    y = rng.integers(0, 2, size=n).astype(float)
    w = rng.uniform(0.1, 3, size=n)
    l2 = float(rng.choice([0.0, 1e-3, 0.1]))
    _, grads = model.loss_and_grad(X, y, w, l2)
    analytic = np.concatenate([grads[k].ravel() for k in model.params])
    numeric = np.concatenate([numeric_grad(model, X, y, w, l2, k).ravel() for k in model.params])
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)


def test_gradients_match_finite_differences():
    worst = max(gradient_check(i) for i in range(100))
    assert worst < 1e-5


def test_score_and_sigmoid_are_stable():
    model = RankerModel(FeatureSpec("pointwise", 1, 1, 1), hidden=2)
    model.params["v"][:] = 1e4
    X = np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, 1.0]])
    loss, _ = model.loss_and_grad(X, np.array([0.0, 1.0]))
    assert math.isfinite(loss)


def test_save_load_round_trip(tmp_path):
    model = RankerModel(FeatureSpec("slate-aware", 2, 2, 3), hidden=5, seed=3)
    model.train_config = {"seed": 3}
    model.save(tmp_path / "m.bin")
    back = RankerModel.load(tmp_path / "m.bin")
    assert back.config() == model.config()
    for k in model.params:
        np.testing.assert_array_equal(back.params[k], model.params[k])


def test_load_rejects_foreign_or_mismatched_files(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"not a model")
    with pytest.raises(ModelFormatError):
        RankerModel.load(tmp_path / "junk.bin")
    model = RankerModel(FeatureSpec("pointwise", 2, 2, 3))
    model.save(tmp_path / "m.bin")
    with pytest.raises(ModelFormatError):
        RankerModel.load(tmp_path / "m.bin", expected_hash="0" * 64)
    with pytest.raises(ModelFormatError):
        RankerModel.load(tmp_path / "missing.bin")


# -- training -----------------------------------------------------------------------

def separable_log(n=400, seed=0):
    """Clicks exactly on documents whose first attribute exceeds one half."""
    docs = obs_docs(12, 2, seed)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        slate = tuple(rng.choice(12, size=3, replace=False).tolist())
        clicks = tuple(int(docs.attrs([d])[0, 0] > 0.5) for d in slate)
        rows.append(row(i % 20, i // 20 + 1, rng.uniform(0, 1, 2), slate, clicks))
    return InteractionLog(rows), docs


def test_training_learns_separable_clicks():
    log, docs = separable_log()
    res = train(RankerModel(FeatureSpec("pointwise", 2, 2, 3), 8), log, docs,
                TrainConfig(epochs=60, learning_rate=0.05, test_fraction=0.25))
    assert res.offline_auc > 0.95
    assert res.n_test > 0 and res.n_train + res.n_test == 3 * len(log)


def test_training_is_bit_deterministic():
    log, docs = separable_log(100)
    cfg = TrainConfig(epochs=5, batch_size=32, seed=11)
    a = train(RankerModel(FeatureSpec("pointwise", 2, 2, 3)), log, docs, cfg)
    b = train(RankerModel(FeatureSpec("pointwise", 2, 2, 3)), log, docs, cfg)
    for k in a.model.params:
        assert a.model.params[k].tobytes() == b.model.params[k].tobytes()
    assert a.losses == b.losses


def test_zero_epochs_leaves_the_model_alone():
    log, docs = separable_log(50)
    init = RankerModel(FeatureSpec("pointwise", 2, 2, 3))
    res = train(init, log, docs, TrainConfig(epochs=0))
    for k in init.params:
        np.testing.assert_array_equal(res.model.params[k], init.params[k])
    assert res.losses == []


def test_full_batch_sgd_decreases_the_loss():
    log, docs = separable_log(100)
    res = train(RankerModel(FeatureSpec("pointwise", 2, 2, 3)), log, docs,
                TrainConfig(epochs=30, batch_size=0, optimizer="sgd", learning_rate=0.1, l2=0.0))
    assert all(b <= a + 1e-12 for a, b in zip(res.losses, res.losses[1:]))


def test_offline_metrics_invariant_to_score_shift():
    log, docs = separable_log(80)
    model = RankerModel(FeatureSpec("pointwise", 2, 2, 3), seed=4)
    imps = build_impressions(model.spec, log, docs)
    before = evaluate_offline(model, imps)
    model.params["b2"] += 3.0
    assert evaluate_offline(model, imps) == before


def test_split_rows():
    mask = split_rows(100, 0.15, 3)
    assert mask.sum() == 15
    np.testing.assert_array_equal(mask, split_rows(100, 0.15, 3))
    assert split_rows(1, 0.5, 0).sum() == 0
    assert split_rows(2, 0.9, 0).sum() == 1


def test_reweighted_loss_needs_bias():
    log, docs = separable_log(20)
    with pytest.raises(ConfigError):
        train(RankerModel(FeatureSpec("pointwise", 2, 2, 3)), log, docs, TrainConfig(loss="reweighted"))
    res = train(RankerModel(FeatureSpec("pointwise", 2, 2, 3)), log, docs,
                TrainConfig(loss="reweighted", position_bias=(1.0, 0.8, 0.6), epochs=2))
    assert all(math.isfinite(x) for x in res.losses)


def test_bad_train_config():
    for bad in ({"learning_rate": 0}, {"mix_ratio": 1.5}, {"loss": "hinge"}, {"epochs": -1}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


# -- mitigation -------------------------------------------------------------------

def test_mitigation_weight_closed_forms():
    w = (0.9, 0.7, 0.5)
    assert mitigation_weight(2, 0.5, 0.5, (1.0, 1.0, 1.0)) == 1.0
    assert mitigation_weight(2, 1.0, 0.0, (1.0, 1.0, 1.0)) == pytest.approx(math.exp(-1), rel=1e-15)
    assert mitigation_weight(1, 0.3, 0.9, w) == pytest.approx(1 / 0.9, rel=1e-15)
    assert mitigation_weight(1, 0.3, None, w) == pytest.approx(1 / 0.9, rel=1e-15)
    with pytest.raises(ConfigError):
        mitigation_weight(4, 0.3, 0.2, w)
    with pytest.raises(ConfigError):
        mitigation_weight(1, 0.3, 0.2, (0.0,))


def test_impression_weights_match_scalar_form():
    w = (1.0, 0.8, 0.6)
    rel = np.array([0.2, 0.7, 0.1, 0.5, 0.4, 0.9])
    pos = np.array([1, 2, 3, 1, 2, 3])
    got = impression_weights(rel, pos, w)
    want = [mitigation_weight(int(k), rel[i], rel[i - 1] if k > 1 else None, w) for i, k in enumerate(pos)]
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_position_bias_under_rrm_is_decreasing():
    docs = generate_slate_documents(20, np.random.default_rng(0))
    users = [UserState(i, np.zeros(2)) for i in range(5)]
    est = estimate_position_bias(RRMSlateModel(docs), users, list(docs.ids), np.random.default_rng(1), 20_000, 3)
    w = est.weights
    assert w[0] == 1.0 and w[0] >= w[1] >= w[2]
    assert not any(est.floored)


def test_position_bias_without_position_effects_is_flat():
    docs = generate_slate_documents(4, np.random.default_rng(0))
    model = IndependentClickModel(docs, {d: 0.4 for d in docs.ids})
    users = [UserState(0, np.zeros(2))]
    est = estimate_position_bias(model, users, list(docs.ids), np.random.default_rng(2), 100_000, 3)
    assert all(abs(x - 1.0) < 0.05 for x in est.weights)


# -- policies -------------------------------------------------------------------------

def test_pointwise_policy_sorts_by_score():
    docs = obs_docs()
    model = RankerModel(FeatureSpec("pointwise", 2, 2, 3), seed=2)
    policy = RankerPolicy(model, docs)
    user = UserState(0, np.array([0.2, 0.9]))
    out = policy.rank(user, [0, 1, 2, 3, 4], 3)
    scores = model.score(extract(model.spec, user.observe(), docs, [0, 1, 2, 3, 4]))
    assert list(out) == [int(i) for i in np.argsort(-scores, kind="stable")[:3]]


def test_slate_aware_search_picks_best_subset():
    docs = obs_docs()
    model = RankerModel(FeatureSpec("slate-aware", 2, 2, 3), seed=5)
    policy = RankerPolicy(model, docs)
    user = UserState(0, np.array([0.6, 0.1]))
    best = policy.rank(user, [0, 1, 2, 3, 4, 5], 3)
    obs = user.observe()
    top = policy.slate_value(obs, best)
    for subset in itertools.combinations(range(6), 3):
        assert policy.slate_value(obs, subset) <= top + 1e-12
    scores = model.score(extract(model.spec, obs, docs, best))
    assert list(scores) == sorted(scores, reverse=True)
