"""One-hidden-layer scorer with a linear skip connection, and its gradients."""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError
from .features import FeatureSpec

FORMAT = "manipsim-ranker"
FORMAT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "w2", "b2", "v")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class RankerModel:
    """``score(x) = w2 . tanh(W1^T x + b1) + v . x + b2``."""

    def __init__(self, spec: FeatureSpec, hidden: int = 16, seed: int = 0):
        self.spec = spec
        self.hidden = hidden
        self.seed = seed
        self.train_config: dict = {}
        rng = np.random.default_rng(seed)
        f = spec.dim
        self.params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(max(f, 1)), size=(f, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden),
            "b2": np.zeros(1),
            "v": np.zeros(f),
        }

    @property
    def kind(self) -> str:
        return self.spec.kind

    def copy(self) -> "RankerModel":
        new = RankerModel.__new__(RankerModel)
        new.spec, new.hidden, new.seed = self.spec, self.hidden, self.seed
        new.train_config = dict(self.train_config)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.spec.dim:
            from ..errors import ConfigError
            raise ConfigError(f"feature width {X.shape[-1]} does not match model width {self.spec.dim}")
        return X

    def score(self, X) -> np.ndarray:
        X = self._check(X)
        p = self.params
        return np.tanh(X @ p["W1"] + p["b1"]) @ p["w2"] + X @ p["v"] + p["b2"][0]

    def loss_and_grad(self, X, y, weights=None, l2: float = 0.0):
        """Weighted mean binary cross-entropy on logits, plus an L2 penalty."""
        X = self._check(X)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
        p = self.params
        h = np.tanh(X @ p["W1"] + p["b1"])
        z = h @ p["w2"] + X @ p["v"] + p["b2"][0]
        wsum = w.sum()
        loss = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / wsum)
        dz = w * (sigmoid(z) - y) / wsum
        dh = np.outer(dz, p["w2"]) * (1.0 - h * h)
        grads = {
            "W1": X.T @ dh,
            "b1": dh.sum(axis=0),
            "w2": h.T @ dz,
            "b2": np.array([dz.sum()]),
            "v": X.T @ dz,
        }
        if l2:
            for name in ("W1", "w2", "v"):
                loss += 0.5 * l2 * float(np.sum(p[name] ** 2))
                grads[name] = grads[name] + l2 * p[name]
        return loss, grads

    # -- persistence ------------------------------------------------------

    def config(self) -> dict:
        return {"kind": self.spec.kind, "spec": self.spec.to_dict(), "hidden": self.hidden,
                "seed": self.seed, "train": self.train_config}

    def save(self, path) -> None:
        cfg = self.config()
        meta = {"format": FORMAT, "version": FORMAT_VERSION, "config": cfg,
                "config_hash": config_hash(cfg)}
        buf = io.BytesIO()
        np.savez(buf, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path, expected_hash: str | None = None) -> "RankerModel":
        try:
            with np.load(Path(path), allow_pickle=False) as data:
                meta = json.loads(str(data["__meta__"]))
                params = {k: data[k].copy() for k in PARAM_NAMES}
        except (OSError, KeyError, ValueError) as exc:
            raise ModelFormatError(f"cannot read model file {path}: {exc}", path=str(path)) from None
        if meta.get("format") != FORMAT or meta.get("version") != FORMAT_VERSION:
            raise ModelFormatError(f"{path} is not a version-{FORMAT_VERSION} ranker file", path=str(path))
        cfg = meta["config"]
        if config_hash(cfg) != meta["config_hash"]:
            raise ModelFormatError("embedded config does not match its hash", path=str(path))
        if expected_hash is not None and expected_hash != meta["config_hash"]:
            raise ModelFormatError("model was trained under a different configuration",
                                   path=str(path), expected=expected_hash, found=meta["config_hash"])
        spec = FeatureSpec(**cfg["spec"])
        model = cls(spec, cfg["hidden"], cfg["seed"])
        for k, v in params.items():
            if v.shape != model.params[k].shape:
                raise ModelFormatError(f"parameter {k} has shape {v.shape}", path=str(path))
        model.params = params
        model.train_config = cfg["train"]
        return model
