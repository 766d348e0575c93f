"""Scenario configuration: strict TOML loading, defaults and canonical dumping.

Layout::

    scenario = "synthetic-slate"      # or "synthetic-sequential"
    [run]        population, rounds, slate/recall sizes, seeds, metric knobs
    [slate]      RRM user model and document groups
    [sequential] topic/budget user model
    [train]      ranker training

Keys left out take scenario-dependent defaults; ``config-reference`` on the
command line prints all of them.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .action_models import RRMParams, SeqModelParams
from .errors import ConfigError
from .rankers.training import TrainConfig

SCENARIOS = ("synthetic-slate", "synthetic-sequential")
SAMPLERS = ("random", "ctr-weighted")
EVAL_POPULATIONS = ("same", "heldout")

SCENARIO_DEFAULTS = {
    "synthetic-slate": {"rounds": 10, "slate_size": 3, "recall_size": 3, "favorites_k": 1,
                        "manipulative": "greedy", "models": ["pointwise", "slate-aware"]},
    "synthetic-sequential": {"rounds": 20, "slate_size": 1, "recall_size": 10, "favorites_k": 10,
                             "manipulative": "planner",
                             "models": ["history-static", "history-dynamic"]},
}


@dataclass(frozen=True)
class RunConfig:
    n_users: int = 1000
    rounds: int | None = None
    slate_size: int | None = None
    recall_size: int | None = None
    sampler: str = "random"
    mix_ratio: float = 0.5
    seeds: tuple[int, ...] = (0,)
    favorites_k: int | None = None
    ps_k: int = 5
    rbo_p: float = 0.9
    manipulative: str | None = None
    baseline: str = "unbiased"
    models: tuple[str, ...] | None = None
    ratios: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    eval_population: str = "same"
    bias_rounds: int = 10000


@dataclass(frozen=True)
class SlateConfig:
    n_groups: int = 100
    user_dim: int = 2
    log_no_choice: float = -1.0
    exam_probs: tuple[float, ...] = (1.0, 0.8, 0.6)


@dataclass(frozen=True)
class SequentialConfig:
    n_topics: int = 10
    docs_per_topic: int = 10
    quality_means: tuple[float, ...] | None = None
    quality_std: float = 0.1
    initial_budget: float = 8.0
    budget_cost_base: float = 1.0
    quality_bonus: float = 0.8
    cost_floor: float = 0.1
    click_sharpness: float = 4.0
    drift_rate: float = 0.2
    planner_horizon: int = 0   # 0: plan to the end of the session


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "synthetic-slate"
    run: RunConfig = field(default_factory=RunConfig)
    slate: SlateConfig = field(default_factory=SlateConfig)
    sequential: SequentialConfig = field(default_factory=SequentialConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}",
                              key="scenario")
        fill = {k: v for k, v in SCENARIO_DEFAULTS[self.scenario].items()
                if getattr(self.run, k) is None}
        if "models" in fill:
            fill["models"] = tuple(fill["models"])
        object.__setattr__(self, "run", dataclasses.replace(self.run, **fill))
        _check(self)
        # force construction-time validation of the model blocks
        try:
            self.rrm_params()
            self.seq_params()
        except ConfigError as exc:
            k = exc.context.get("key")
            if k is None or k in exc.message:
                raise
            raise ConfigError(f"{k}: {exc.message}", key=k) from None

    @property
    def is_slate(self) -> bool:
        return self.scenario == "synthetic-slate"

    def rrm_params(self) -> RRMParams:
        return RRMParams(self.slate.log_no_choice, tuple(self.slate.exam_probs))

    def seq_params(self) -> SeqModelParams:
        s = self.sequential
        return SeqModelParams(s.n_topics, s.docs_per_topic, s.quality_means, s.quality_std,
                              s.initial_budget, s.budget_cost_base, s.quality_bonus, s.cost_floor,
                              s.click_sharpness, s.drift_rate)

    def n_docs(self) -> int:
        if self.is_slate:
            return 4 * self.slate.n_groups
        return self.sequential.n_topics * self.sequential.docs_per_topic

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seeds=(seed,)))

    def with_run(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))

    def to_dict(self) -> dict:
        return _to_plain(self)


def _check(cfg: ScenarioConfig) -> None:
    r, s = cfg.run, cfg.slate

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}", key=key)

    need(r.n_users >= 1, "run.n_users", "must be at least 1")
    need(r.rounds >= 0, "run.rounds", "must be non-negative")
    need(r.slate_size >= 1, "run.slate_size", "must be at least 1")
    need(r.recall_size >= r.slate_size, "run.recall_size", "must be at least slate_size")
    need(r.recall_size <= cfg.n_docs(), "run.recall_size", "exceeds the number of documents")
    need(r.sampler in SAMPLERS, "run.sampler", f"must be one of {SAMPLERS}")
    need(0.0 <= r.mix_ratio <= 1.0, "run.mix_ratio", "must lie in [0, 1]")
    need(len(r.seeds) >= 1, "run.seeds", "needs at least one seed")
    need(all(x >= 0 for x in r.seeds), "run.seeds", "seeds must be non-negative")
    need(len(set(r.seeds)) == len(r.seeds), "run.seeds", "seeds must be distinct")
    need(all(0.0 <= a <= 1.0 for a in r.ratios), "run.ratios", "every ratio must lie in [0, 1]")
    need(r.ps_k >= 1, "run.ps_k", "must be at least 1")
    need(0.0 < r.rbo_p < 1.0, "run.rbo_p", "must lie in (0, 1)")
    need(r.eval_population in EVAL_POPULATIONS, "run.eval_population", f"must be one of {EVAL_POPULATIONS}")
    need(r.bias_rounds >= 1, "run.bias_rounds", "must be at least 1")
    if cfg.is_slate:
        need(r.recall_size == 3, "run.recall_size", "the slate scenario recalls exactly 3 documents")
        need(r.favorites_k <= 4, "run.favorites_k", "a document group holds only 4 documents")
        need(r.ps_k <= cfg.n_docs(), "run.ps_k", "exceeds the number of documents")
        need(len(s.exam_probs) == r.slate_size, "slate.exam_probs",
             f"has {len(s.exam_probs)} entries but slate_size is {r.slate_size}")
        need(s.user_dim >= 0, "slate.user_dim", "must be non-negative")
        need(s.n_groups >= 2 and s.n_groups % 2 == 0, "slate.n_groups", "must be a positive even number")
    else:
        need(r.favorites_k <= cfg.n_docs(), "run.favorites_k", "exceeds the number of documents")
        need(r.ps_k <= cfg.n_docs(), "run.ps_k", "exceeds the number of documents")
        need(cfg.sequential.planner_horizon >= 0, "sequential.planner_horizon", "must be non-negative")
    need(r.favorites_k >= 1, "run.favorites_k", "must be at least 1")


# ---------------------------------------------------------------------------
# strict (de)serialisation


SECTIONS = {"run": RunConfig, "slate": SlateConfig, "sequential": SequentialConfig, "train": TrainConfig}
# seed and mix ratio of a training run come from [run]; not user-settable under [train]
TRAIN_DERIVED = ("seed", "mix_ratio")


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(key: str, value: Any, annotation: str) -> Any:
    """Check ``value`` against the (string) annotation of a config field."""
    optional = annotation.endswith("| None")
    base = annotation.replace("| None", "").strip()
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{key}: null is not allowed", key=key)
    if base.startswith("tuple"):
        inner = base[base.index("[") + 1:base.index(",")].strip() if "," in base else "float"
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected an array, got {type(value).__name__}", key=key)
        return tuple(_coerce(f"{key}[{i}]", v, inner) for i, v in enumerate(value))
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean", key=key)
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}", key=key)
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite", key=key)
        return value
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}", key=key)
        return value
    raise ConfigError(f"{key}: unsupported field type {annotation}", key=key)


def _section(name: str, cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table", key=name)
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        full = f"{name}.{key}"
        if key not in known or (cls is TrainConfig and key in TRAIN_DERIVED):
            raise ConfigError(f"unknown key {full}", key=full)
        kwargs[key] = _coerce(full, value, str(known[key].type))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        k = exc.context.get("key", name)
        raise ConfigError(exc.message if k in exc.message else f"{k}: {exc.message}", key=k) from None


def from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    unknown = set(data) - {"scenario", *SECTIONS}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key}", key=key)
    scenario = _coerce("scenario", data.get("scenario", "synthetic-slate"), "str")
    parts = {name: _section(name, cls, data.get(name, {})) for name, cls in SECTIONS.items()}
    return ScenarioConfig(scenario, **parts)


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}", path=str(p))
    return loads(p.read_text(encoding="utf-8"))


def _to_plain(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(x) for x in obj]
    return obj


def _drop_none(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _drop_none(v)
        elif v is not None:
            out[k] = v
    return out


def dumps(cfg: ScenarioConfig) -> str:
    """Canonical TOML with every default spelled out (TOML has no null)."""
    data = _drop_none(cfg.to_dict())
    for k in TRAIN_DERIVED:
        data["train"].pop(k, None)
    return tomli_w.dumps(data)


def dump_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


KEY_DOCS = {
    "scenario": "synthetic-slate (decoy groups, 3-item slates) or synthetic-sequential (topics and budgets)",
    "run.n_users": "population size",
    "run.rounds": "interaction rounds per user",
    "run.slate_size": "documents shown per round",
    "run.recall_size": "candidates handed to the ranker per round",
    "run.sampler": "recall sampler: random or ctr-weighted (sequential scenario)",
    "run.mix_ratio": "default share of rounds taken from the manipulative log",
    "run.seeds": "one world and one set of runs per seed",
    "run.favorites_k": "size of each user's favorite set",
    "run.ps_k": "length of the preference lists compared by preference shift",
    "run.rbo_p": "persistence of rank-biased overlap",
    "run.manipulative": "oracle whose log is mixed in with share mix_ratio",
    "run.baseline": "oracle providing the remaining rounds",
    "run.models": "ranker feature kinds trained by sweep",
    "run.ratios": "mix ratios visited by sweep",
    "run.eval_population": "same: evaluate on the training users; heldout: on a fresh population",
    "run.bias_rounds": "random slates drawn to estimate position bias for the reweighted loss",
    "slate.n_groups": "document groups (4 documents each; even, half are attribute-swapped)",
    "slate.user_dim": "length of the uniform user feature vector",
    "slate.log_no_choice": "log-weight of the no-click option",
    "slate.exam_probs": "examination probability of each slate position",
    "sequential.n_topics": "number of topics",
    "sequential.docs_per_topic": "documents per topic",
    "sequential.quality_means": "mean quality per topic (unset: evenly spaced on [0, 1])",
    "sequential.quality_std": "spread of document quality around its topic mean",
    "sequential.initial_budget": "session budget of every user",
    "sequential.budget_cost_base": "budget spent by a round without a click",
    "sequential.quality_bonus": "cost reduction per unit quality of a clicked document",
    "sequential.cost_floor": "smallest budget cost of a click",
    "sequential.click_sharpness": "slope of the logistic click curve in topic preference",
    "sequential.drift_rate": "pull of a click on the clicked topic's preference towards 1",
    "sequential.planner_horizon": "planner look-ahead in rounds (0: to the end of the session)",
    "train.learning_rate": "optimizer step size",
    "train.epochs": "passes over the training split",
    "train.batch_size": "impressions per step (0: full batch)",
    "train.loss": "cross-entropy or reweighted (position-bias mitigation)",
    "train.hidden": "hidden units of the scorer",
    "train.l2": "weight decay",
    "train.optimizer": "adam or sgd",
    "train.test_fraction": "share of log rows held out for offline AUC / NDCG",
    "train.ema_decay": "decay of the click-history average used by history features",
    "train.position_bias": "fixed per-position weights for the reweighted loss (unset: estimated)",
}


def _toml_value(v) -> str:
    # json spelling is valid TOML for the scalar and flat-array values used here
    return json.dumps(v)


def reference() -> str:
    """Every key with its default and meaning; per-scenario defaults are listed side by side."""
    slate, seq = (_to_plain(ScenarioConfig(sc)) for sc in SCENARIOS)
    lines = ["# manipsim configuration reference. Omitted keys take the defaults shown.",
             f'scenario = "{SCENARIOS[0]}"  # {KEY_DOCS["scenario"]}']
    for name in SECTIONS:
        lines += ["", f"[{name}]"]
        for key, v in slate[name].items():
            if name == "train" and key in TRAIN_DERIVED:
                continue
            doc = KEY_DOCS[f"{name}.{key}"]
            other = seq[name][key]
            if v is None:
                lines.append(f"# {key} =  # {doc}")
                continue
            note = f"; {SCENARIOS[1]}: {_toml_value(other)}" if other != v else ""
            lines.append(f"{key} = {_toml_value(v)}  # {doc}{note}")
    return "\n".join(lines) + "\n"
