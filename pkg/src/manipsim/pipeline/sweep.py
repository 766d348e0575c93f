"""The full mix-ratio grid and its reproducibility check."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ScenarioConfig
from ..errors import ManipsimError, StageOrderError
from ..metrics import MetricReport
from ..rankers import (FeatureSpec, RankerModel, RankerPolicy, TrainConfig, build_impressions,
                       estimate_position_bias, evaluate_offline, split_rows, train)
from ..types import InteractionLog, PreferenceTable, validate_log
from .evaluation import evaluate, evaluation_population, report_from_log
from .rundir import Cell, Manifest, RunDir, curves_csv, ratio_tag, raise_if, reports_csv, same_report
from .stages import collect_oracle, make_strategy, mix
from .world import BIAS, MIX, World, build_world, compute_initial_preferences

log = logging.getLogger(__name__)

UNDEFINED = float("nan")


def world_file(rd: RunDir, seed: int) -> Path:
    return rd.seed_dir(seed) / "world.json"


def prefs_file(rd: RunDir, seed: int) -> Path:
    return rd.seed_dir(seed) / "prefs.csv"


def raw_log_file(rd: RunDir, seed: int, strategy: str) -> Path:
    return rd.seed_dir(seed) / f"log_{strategy}.jsonl"


def mixed_log_file(rd: RunDir, seed: int, alpha: float) -> Path:
    return rd.seed_dir(seed) / f"log_mixed_{ratio_tag(alpha)}.jsonl"


def model_file(rd: RunDir, seed: int, kind: str, alpha: float) -> Path:
    return rd.seed_dir(seed) / f"model_{kind}_{ratio_tag(alpha)}.bin"


def eval_log_file(rd: RunDir, seed: int, policy: str, alpha: float | None) -> Path:
    suffix = "" if alpha is None else f"_{ratio_tag(alpha)}"
    return rd.seed_dir(seed) / f"eval_{policy}{suffix}.jsonl"


def mix_rng(seed: int, alpha: float) -> np.random.Generator:
    return np.random.default_rng([seed, MIX, int(round(alpha * 1e6))])


# -- stage helpers shared by the sweep and the command line -------------------

def stage_prefs(rd: RunDir, seed: int) -> tuple[World, PreferenceTable]:
    world = build_world(rd.cfg, seed)
    prefs = compute_initial_preferences(world.users, world.docs, world.model)
    rd.seed_dir(seed).mkdir(parents=True, exist_ok=True)
    world.save(world_file(rd, seed))
    prefs.save(prefs_file(rd, seed))
    return world, prefs


def load_stage1(rd: RunDir, seed: int) -> tuple[World, PreferenceTable]:
    wf, pf = world_file(rd, seed), prefs_file(rd, seed)
    if not wf.is_file() or not pf.is_file():
        raise StageOrderError(f"seed {seed} has no initial preferences; run the prefs stage first",
                              path=str(rd.seed_dir(seed)))
    return World.load(wf, rd.cfg), PreferenceTable.load(pf)


def stage_collect(rd: RunDir, world: World, prefs: PreferenceTable, strategy: str) -> InteractionLog:
    out = collect_oracle(world, prefs, strategy)
    out.save(raw_log_file(rd, world.seed, strategy))
    return out


def train_config(cfg: ScenarioConfig, world: World, seed: int, alpha: float) -> TrainConfig:
    """The configured training block with the run seed and ratio filled in."""
    t = cfg.train
    bias = t.position_bias
    if t.loss == "reweighted" and bias is None:
        est = estimate_position_bias(world.model, world.fresh_users(), list(world.docs.ids),
                                     np.random.default_rng([seed, BIAS]), cfg.run.bias_rounds,
                                     cfg.run.slate_size)
        bias = est.weights
    return TrainConfig(**{**t.to_dict(), "seed": seed, "mix_ratio": float(alpha), "position_bias": bias})


def fit(cfg: ScenarioConfig, world: World, kind: str, data: InteractionLog, tc: TrainConfig):
    spec = FeatureSpec(kind, world.users[0].u0.size if world.users else 0,
                       world.docs.observable().dim, cfg.run.slate_size, tc.ema_decay)
    return train(RankerModel(spec, tc.hidden, tc.seed), data, world.docs.observable(), tc)


def offline_metrics(model: RankerModel, data: InteractionLog, world: World) -> tuple[float, float]:
    """AUC / NDCG on the held-out slates of the log the model was trained on."""
    tc = model.train_config or {}
    held = split_rows(len(data), tc.get("test_fraction", 0.0), tc.get("seed", 0))
    imps = build_impressions(model.spec, data, world.docs.observable())
    return evaluate_offline(model, imps.take(held))


def failed_report(cfg: ScenarioConfig, policy: str, alpha: float | None, seed: int,
                  err: Exception) -> MetricReport:
    return MetricReport(policy, cfg.scenario, alpha, seed, UNDEFINED, UNDEFINED, UNDEFINED, UNDEFINED,
                        UNDEFINED, UNDEFINED, status=f"failed: {type(err).__name__}: {err}")


# -- the grid -----------------------------------------------------------------

def run_seed(rd: RunDir, m: Manifest, seed: int, ratios: Sequence[float],
             models: Sequence[str]) -> list[MetricReport]:
    cfg = rd.cfg
    world, prefs = stage_prefs(rd, seed)
    manip, base = cfg.run.manipulative, cfg.run.baseline
    logs = {name: stage_collect(rd, world, prefs, name) for name in (manip, base)}
    m.raw_logs[str(seed)] = {name: rd.rel(raw_log_file(rd, seed, name)) for name in logs}
    reports = []
    for alpha in ratios:
        mixed = mix(logs[manip], logs[base], alpha, mix_rng(seed, alpha), cfg.run.rounds)
        mf = mixed_log_file(rd, seed, alpha)
        mixed.save(mf)
        m.mixed.append({"seed": seed, "ratio": alpha, "a": rd.rel(raw_log_file(rd, seed, manip)),
                        "b": rd.rel(raw_log_file(rd, seed, base)), "file": rd.rel(mf),
                        "rounds": cfg.run.rounds})
        for kind in models:
            ef = eval_log_file(rd, seed, kind, alpha)
            cell = Cell(seed, kind, alpha, rd.rel(ef), rd.rel(model_file(rd, seed, kind, alpha)),
                        rd.rel(mf))
            try:
                result = fit(cfg, world, kind, mixed, train_config(cfg, world, seed, alpha))
                result.model.save(model_file(rd, seed, kind, alpha))
                ev_log, report = evaluate(world, prefs, RankerPolicy(result.model, world.docs.observable()),
                                          kind, alpha)
                ev_log.save(ef)
                report.offline_auc, report.offline_ndcg = result.offline_auc, result.offline_ndcg
            except (ManipsimError, ValueError, FloatingPointError) as err:
                log.warning("seed %d, %s at ratio %s failed: %s", seed, kind, alpha, err)
                report = failed_report(cfg, kind, alpha, seed, err)
                cell.status = report.status
            log.info("seed %d %s alpha=%s ctr=%.4f fctr=%.4f", seed, kind, alpha, report.ctr, report.fctr)
            m.cells.append(cell)
            reports.append(report)
    return reports


def sweep(cfg: ScenarioConfig, out, ratios: Sequence[float] | None = None,
          models: Sequence[str] | None = None, seeds: Sequence[int] | None = None) -> list[MetricReport]:
    """Train and evaluate every (ratio, model, seed) cell; one report per cell.

    Arguments left as None come from the configuration. A cell that fails is
    reported with a ``failed: ...`` status and the sweep moves on.
    """
    ratios = tuple(float(a) for a in (cfg.run.ratios if ratios is None else ratios))
    models = tuple(cfg.run.models if models is None else models)
    seeds = tuple(cfg.run.seeds if seeds is None else seeds)
    cfg = cfg.with_run(ratios=ratios, models=models, seeds=seeds)
    for kind in models:
        FeatureSpec(kind, 1, 1, cfg.run.slate_size)   # reject unknown kinds before any work
    rd = RunDir(out)
    m = rd.init(cfg)
    reports = []
    for seed in seeds:
        reports += run_seed(rd, m, seed, ratios, models)
    rd.write_reports(reports)
    rd.write_manifest(m)
    return reports


# -- verification -------------------------------------------------------------

def _cell_report(rd: RunDir, cell: Cell, world: World, prefs: PreferenceTable,
                 problems: list[str]) -> MetricReport | None:
    ef = rd.root / cell.eval_log
    ev_log = InteractionLog.load(ef)
    problems += [f"{cell.eval_log}: {p}" for p in validate_log(ev_log)]
    users, eval_prefs = evaluation_population(world, prefs)
    report = report_from_log(world, eval_prefs, users, ev_log, cell.policy, cell.mix_ratio)
    if cell.model is not None:
        model = RankerModel.load(rd.root / cell.model)
        data = InteractionLog.load(rd.root / cell.train_log)
        report.offline_auc, report.offline_ndcg = offline_metrics(model, data, world)
    return report


def _policy(rd: RunDir, cell: Cell, world: World, prefs: PreferenceTable):
    if cell.model is None:
        return make_strategy(cell.policy, world, prefs)
    return RankerPolicy(RankerModel.load(rd.root / cell.model), world.docs.observable(), cell.policy)


def verify(out, deep: bool = False) -> list[MetricReport]:
    """Re-derive a run directory from its stored inputs.

    Checks artifact hashes, recomputes preferences from the stored world,
    validates every log, regenerates the mixed logs and recomputes every
    report from the stored evaluation logs, which must match bit for bit.
    With ``deep`` the evaluation interactions are replayed as well.
    Raises VerificationError listing what differed.
    """
    rd = RunDir(out)
    m = rd.load_manifest()
    raise_if(rd.check_hashes(m), "artifact hashes")
    cfg = rd.cfg
    problems: list[str] = []
    worlds: dict[int, tuple[World, PreferenceTable]] = {}
    for seed in m.seeds:
        if not world_file(rd, seed).is_file():
            continue
        world, prefs = load_stage1(rd, seed)
        if compute_initial_preferences(world.users, world.docs, world.model).to_csv() != prefs.to_csv():
            problems.append(f"seed {seed}: preferences differ from a recomputation")
        worlds[seed] = (world, prefs)
    for seed, files in m.raw_logs.items():
        for rel in files.values():
            problems += [f"{rel}: {p}" for p in validate_log(InteractionLog.load(rd.root / rel))]
    for entry in m.mixed:
        a, b = InteractionLog.load(rd.root / entry["a"]), InteractionLog.load(rd.root / entry["b"])
        again = mix(a, b, entry["ratio"], mix_rng(entry["seed"], entry["ratio"]), entry["rounds"])
        if again.to_jsonl() != (rd.root / entry["file"]).read_text(encoding="utf-8"):
            problems.append(f"{entry['file']}: differs from a fresh mix of its sources")
    stored = {(r.policy, r.mix_ratio, r.seed): r for r in rd.load_reports()}
    recomputed = []
    for cell in m.cells:
        key = (cell.policy, cell.mix_ratio, cell.seed)
        if key not in stored:
            problems.append(f"no stored report for {key}")
            continue
        if cell.status != "ok":
            recomputed.append(stored[key])
            continue
        world, prefs = worlds[cell.seed]
        report = _cell_report(rd, cell, world, prefs, problems)
        if not same_report(report, stored[key]):
            problems.append(f"report for {key} differs from its recomputation")
        recomputed.append(report)
        if deep:
            ev_log, _ = evaluate(world, prefs, _policy(rd, cell, world, prefs), cell.policy, cell.mix_ratio)
            if ev_log.to_jsonl() != (rd.root / cell.eval_log).read_text(encoding="utf-8"):
                problems.append(f"{cell.eval_log}: replayed interaction differs")
    if (rd.root / "report.csv").is_file() and reports_csv(recomputed) != (rd.root / "report.csv").read_text(encoding="utf-8"):
        problems.append("report.csv differs from the recomputed reports")
    if (rd.root / "curves.csv").is_file() and curves_csv(recomputed) != (rd.root / "curves.csv").read_text(encoding="utf-8"):
        problems.append("curves.csv differs from the recomputed reports")
    raise_if(problems, "verification failed")
    return recomputed
