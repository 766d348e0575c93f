"""Command-line front end.

Every stage writes into a run directory (``--out``)::

    manipsim prefs   --config C --out RUN
    manipsim collect --config C --strategy greedy --out RUN
    manipsim mixdata --a RUN/seed_0/log_greedy.jsonl --b RUN/seed_0/log_unbiased.jsonl \\
                     --ratio 0.4 --out mixed.jsonl
    manipsim train   --config C --log mixed.jsonl --model pointwise --out model.bin
    manipsim eval    --config C --model model.bin --out RUN
    manipsim sweep   --config C --ratios 0,0.5,1 --models pointwise --seeds 0,1 --out RUN
    manipsim verify  --out RUN

Failures print ``{"code", "message", "context"}`` as JSON on stderr and exit
with 2 (configuration), 3 (missing prerequisite stage) or 4 (verification).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, load_config, reference
from .errors import ConfigError, ManipsimError, StageOrderError
from .pipeline.evaluation import evaluate
from .pipeline.rundir import Cell, RunDir
from .pipeline.stages import make_strategy, mix
from .pipeline.sweep import (eval_log_file, load_stage1, mix_rng, offline_metrics, stage_collect,
                             stage_prefs, sweep, train_config, fit, verify)
from .pipeline.world import World
from .rankers import RankerModel, RankerPolicy
from .types import InteractionLog


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _strs(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, allow_nan=True))


def _existing_run(out, cfg: ScenarioConfig):
    rd = RunDir(out)
    return rd, rd.open_existing(cfg)


def _pick_seed(cfg: ScenarioConfig, seed: int | None) -> int:
    if seed is None:
        return cfg.run.seeds[0]
    if seed not in cfg.run.seeds:
        raise ConfigError(f"seed {seed} is not among the configured seeds {list(cfg.run.seeds)}",
                          key="run.seeds")
    return seed


# -- subcommands --------------------------------------------------------------

def cmd_prefs(args) -> int:
    cfg = load_config(args.config)
    rd = RunDir(args.out)
    m = rd.manifest_or_new(cfg)
    for seed in cfg.run.seeds:
        stage_prefs(rd, seed)
    rd.write_manifest(m)
    _emit({"stage": "prefs", "seeds": list(cfg.run.seeds), "users": cfg.run.n_users})
    return 0


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    rd, m = _existing_run(args.out, cfg)
    written = {}
    for seed in cfg.run.seeds:
        world, prefs = load_stage1(rd, seed)
        make_strategy(args.strategy, world, prefs)
        out = stage_collect(rd, world, prefs, args.strategy)
        m.raw_logs.setdefault(str(seed), {})[args.strategy] = rd.rel(rd.seed_dir(seed) / f"log_{args.strategy}.jsonl")
        written[seed] = len(out)
    rd.write_manifest(m)
    _emit({"stage": "collect", "strategy": args.strategy, "rows": written})
    return 0


def cmd_mixdata(args) -> int:
    if not 0.0 <= args.ratio <= 1.0:
        raise ConfigError("--ratio must lie in [0, 1]", key="ratio")
    for p in (args.a, args.b):
        if not Path(p).is_file():
            raise StageOrderError(f"log {p} does not exist; run collect first", path=str(p))
    a, b = InteractionLog.load(args.a), InteractionLog.load(args.b)
    out = mix(a, b, args.ratio, mix_rng(args.seed, args.ratio), args.rounds)
    out.save(args.out)
    _emit({"stage": "mixdata", "ratio": args.ratio, "rows": len(out)})
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _pick_seed(cfg, args.seed)
    log_path = Path(args.log)
    if not log_path.is_file():
        raise StageOrderError(f"training log {log_path} does not exist", path=str(log_path))
    world_path = Path(args.world) if args.world else log_path.parent / "world.json"
    if not world_path.is_file():
        raise StageOrderError(f"no world file at {world_path}; run the prefs stage first",
                              path=str(world_path))
    world = World.load(world_path, cfg)
    data = InteractionLog.load(log_path)
    result = fit(cfg, world, args.model, data, train_config(cfg, world, seed, args.ratio))
    result.model.save(args.out)
    _emit({"stage": "train", "model": args.model, "offline_auc": result.offline_auc,
           "offline_ndcg": result.offline_ndcg, "n_train": result.n_train, "n_test": result.n_test,
           "final_loss": result.losses[-1] if result.losses else None})
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    rd, m = _existing_run(args.out, cfg)
    seed = _pick_seed(cfg, args.seed)
    world, prefs = load_stage1(rd, seed)
    seed_dir = rd.seed_dir(seed)
    model_rel = train_rel = None
    if args.oracle:
        name = args.name or args.oracle
        policy = make_strategy(args.oracle, world, prefs)
        ratio = None
    else:
        src = Path(args.model)
        model = RankerModel.load(src)
        name = args.name or model.kind
        ratio = args.ratio
        if ratio is None and model.train_config:
            ratio = model.train_config.get("mix_ratio")
        policy = RankerPolicy(model, world.docs.observable(), name)
        # keep the weights inside the run directory so verify can find them
        dest = seed_dir / (src.name if src.resolve().parent == seed_dir.resolve() else f"model_{name}.bin")
        if src.resolve() != dest.resolve():
            shutil.copyfile(src, dest)
        model_rel = rd.rel(dest)
        if args.train_log:
            tl = Path(args.train_log)
            tdest = seed_dir / (tl.name if tl.resolve().parent == seed_dir.resolve() else f"train_{name}.jsonl")
            if tl.resolve() != tdest.resolve():
                shutil.copyfile(tl, tdest)
            train_rel = rd.rel(tdest)
    ev_log, report = evaluate(world, prefs, policy, name, ratio)
    ef = eval_log_file(rd, seed, name, ratio)
    ev_log.save(ef)
    if train_rel is not None:
        report.offline_auc, report.offline_ndcg = offline_metrics(
            policy.model, InteractionLog.load(rd.root / train_rel), world)
    key = (name, ratio, seed)
    m.cells = [c for c in m.cells if (c.policy, c.mix_ratio, c.seed) != key]
    m.cells.append(Cell(seed, name, ratio, rd.rel(ef), model_rel, train_rel))
    reports = [r for r in rd.load_reports() if (r.policy, r.mix_ratio, r.seed) != key] + [report]
    rd.write_reports(reports)
    rd.write_manifest(m)
    _emit({"stage": "eval", "policy": name, "seed": seed, "mix_ratio": ratio, "ctr": report.ctr,
           "fctr": report.fctr, "maniscore": report.maniscore, "ps": report.ps})
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    reports = sweep(cfg, args.out,
                    _floats(args.ratios) if args.ratios else None,
                    _strs(args.models) if args.models else None,
                    _ints(args.seeds) if args.seeds else None)
    failed = [r for r in reports if r.status != "ok"]
    _emit({"stage": "sweep", "rows": len(reports), "failed": len(failed), "out": str(args.out)})
    return 0


def cmd_verify(args) -> int:
    reports = verify(args.out, deep=args.deep)
    _emit({"stage": "verify", "status": "ok", "reports": len(reports), "deep": args.deep})
    return 0


def cmd_config_reference(args) -> int:
    sys.stdout.write(reference())
    return 0


# -- plumbing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manipsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prefs", help="stage 1: build worlds and initial preferences")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prefs)

    s = sub.add_parser("collect", help="stage 2: log an oracle strategy")
    s.add_argument("--config", required=True)
    s.add_argument("--strategy", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("mixdata", help="mix two logs round by round")
    s.add_argument("--a", required=True, help="log contributing the ratio share")
    s.add_argument("--b", required=True)
    s.add_argument("--ratio", required=True, type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rounds", type=int, default=None, help="rounds per user (default: from the logs)")
    s.set_defaults(func=cmd_mixdata)

    s = sub.add_parser("train", help="stage 3: fit a ranker to a log")
    s.add_argument("--config", required=True)
    s.add_argument("--log", required=True)
    s.add_argument("--model", required=True, help="feature kind, e.g. pointwise")
    s.add_argument("--out", required=True)
    s.add_argument("--world", default=None, help="world.json (default: next to the log)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--ratio", type=float, default=0.0, help="mix ratio recorded with the model")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="stages 3-4: interact with a policy and report metrics")
    s.add_argument("--config", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--oracle")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--name", default=None, help="policy name in the report")
    s.add_argument("--ratio", type=float, default=None)
    s.add_argument("--train-log", default=None, help="log the model was trained on, for offline metrics")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="the full ratio x model x seed grid")
    s.add_argument("--config", required=True)
    s.add_argument("--ratios", default=None)
    s.add_argument("--models", default=None)
    s.add_argument("--seeds", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="re-derive a run directory and compare")
    s.add_argument("--out", required=True)
    s.add_argument("--deep", action="store_true", help="also replay every evaluation")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("config-reference", help="print every configuration key with its default")
    s.set_defaults(func=cmd_config_reference)
    return p


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return str(v)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ManipsimError as err:
        payload = {"code": err.code, "message": err.message, "context": _jsonable(err.context)}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
