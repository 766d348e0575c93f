"""Mini-batch training of :class:`RankerModel` on interaction logs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..metrics import mean_ndcg, offline_auc
from ..types import InteractionLog, ObservableDocs
from .features import FeatureSpec, extract, history_embedding
from .mitigation import impression_weights
from .model import RankerModel, sigmoid

LOSSES = ("cross-entropy", "reweighted")
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 256          # 0: full batch
    seed: int = 0
    loss: str = "cross-entropy"
    mix_ratio: float = 0.0
    hidden: int = 16
    l2: float = 1e-4
    optimizer: str = "adam"
    test_fraction: float = 0.15
    ema_decay: float = 0.8
    position_bias: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive", key="train.learning_rate")
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ConfigError("mix_ratio must lie in [0, 1]", key="train.mix_ratio")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative", key="train.epochs")
        if self.batch_size < 0:
            raise ConfigError("batch_size must be non-negative", key="train.batch_size")
        if self.hidden < 1:
            raise ConfigError("hidden must be at least 1", key="train.hidden")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative", key="train.l2")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}", key="train.loss")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}", key="train.optimizer")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)", key="train.test_fraction")
        if self.position_bias is not None:
            object.__setattr__(self, "position_bias", tuple(float(x) for x in self.position_bias))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["position_bias"] is not None:
            d["position_bias"] = list(d["position_bias"])
        return d


@dataclass
class Impressions:
    """One row per displayed document; slates are contiguous and in display order."""

    X: np.ndarray
    y: np.ndarray
    slate: np.ndarray       # index of the source log row
    position: np.ndarray    # 1-based

    def take(self, slate_mask: np.ndarray) -> "Impressions":
        m = slate_mask[self.slate]
        return Impressions(self.X[m], self.y[m], self.slate[m], self.position[m])


def build_impressions(spec: FeatureSpec, log: InteractionLog, docs: ObservableDocs) -> Impressions:
    xs, ys, slates, positions = [], [], [], []
    hist_cache: dict[tuple[int, ...], np.ndarray] = {}
    for i, row in enumerate(log):
        user = row.observed
        hist = None
        if spec.kind == "history-dynamic":
            # histories of one user share prefixes; EMA over a tuple is cheap to memoise
            key = user.history
            hist = hist_cache.get(key)
            if hist is None:
                hist = history_embedding(key, docs, spec.ema_decay)
                hist_cache[key] = hist
        xs.append(extract(spec, user, docs, row.slate.docs, hist=hist))
        n = len(row.slate.docs)
        ys.append(row.slate.clicks)
        slates.append(np.full(n, i))
        positions.append(np.arange(1, n + 1))
    if not xs:
        raise ContractViolation("cannot train on an empty log")
    return Impressions(np.vstack(xs), np.concatenate(ys).astype(np.float64),
                       np.concatenate(slates), np.concatenate(positions))


def split_rows(n_rows: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask of held-out log rows."""
    n_test = int(math.floor(fraction * n_rows + 0.5))
    if n_rows > 1:
        n_test = min(n_test, n_rows - 1)
    else:
        n_test = 0
    order = np.random.default_rng(seed).permutation(n_rows)
    mask = np.zeros(n_rows, dtype=bool)
    mask[order[:n_test]] = True
    return mask


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.b1 + (1.0 - self.b1) * g
            v = self.v.get(k, 0.0) * self.b2 + (1.0 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            params[k] -= self.lr * g


@dataclass
class TrainResult:
    model: RankerModel
    offline_auc: float
    offline_ndcg: float
    losses: list[float] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0


def evaluate_offline(model: RankerModel, data: Impressions) -> tuple[float, float]:
    if data.y.size == 0:
        return float("nan"), float("nan")
    scores = model.score(data.X)
    auc = offline_auc(scores, data.y)
    groups = []
    for s in np.unique(data.slate):
        m = data.slate == s
        order = np.lexsort((data.position[m], -scores[m]))
        groups.append(data.y[m][order])
    return auc, mean_ndcg(groups)


def train(model: RankerModel, log: InteractionLog, docs: ObservableDocs, cfg: TrainConfig) -> TrainResult:
    """Fit a copy of ``model`` to the sampled clicks in ``log``.

    A seeded shuffle holds out ``test_fraction`` of the slates, which are
    scored for AUC / NDCG afterwards. Everything is driven by ``cfg.seed``.
    """
    if len(log) == 0:
        raise ContractViolation("cannot train on an empty log")
    if cfg.loss == "reweighted" and cfg.position_bias is None:
        raise ConfigError("reweighted loss needs a position_bias vector", key="train.position_bias")
    model = model.copy()
    model.train_config = cfg.to_dict()
    data = build_impressions(model.spec, log, docs)
    test_rows = split_rows(len(log), cfg.test_fraction, cfg.seed)
    tr, te = data.take(~test_rows), data.take(test_rows)
    rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)
    n = tr.y.size
    batch = n if cfg.batch_size == 0 else min(cfg.batch_size, n)
    losses = []
    for _ in range(cfg.epochs):
        if cfg.loss == "reweighted":
            rel = sigmoid(model.score(tr.X))
            weights = impression_weights(rel, tr.position, cfg.position_bias)
            weights = weights / weights.mean()
        else:
            weights = np.ones(n)
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, grads = model.loss_and_grad(tr.X[idx], tr.y[idx], weights[idx], cfg.l2)
            opt.step(model.params, grads)
        losses.append(model.loss_and_grad(tr.X, tr.y, weights, cfg.l2)[0])
    auc, ndcg = evaluate_offline(model, te)
    return TrainResult(model, auc, ndcg, losses, int(n), int(te.y.size))
