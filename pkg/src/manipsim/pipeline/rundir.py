"""Run directory layout, manifest and report files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from ..config import TRAIN_DERIVED, ScenarioConfig, dump_config, dumps, from_dict, load_config
from ..errors import StageOrderError, VerificationError
from ..metrics import MetricReport

MANIFEST = "manifest.json"
CONFIG = "config.toml"
CURVE_FIELDS = ("policy", "scenario", "mix_ratio", "seed", "round", "ctr", "fctr", "ps")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ratio_tag(alpha: float) -> str:
    return repr(float(alpha))


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_csv(reports: list[MetricReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MetricReport.CSV_FIELDS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def curves_csv(reports: list[MetricReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_FIELDS)
    for r in reports:
        curves = r.curves or {}
        n = len(curves.get("ctr", []))
        for i in range(n):
            w.writerow([r.policy, r.scenario, _num(r.mix_ratio), r.seed, i + 1,
                        _num(curves["ctr"][i]), _num(curves["fctr"][i]), _num(curves["ps"][i])])
    return buf.getvalue()


def report_json(reports: list[MetricReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)


def same_report(a: MetricReport, b: MetricReport) -> bool:
    """Bit-level equality, with nan equal to nan."""
    return json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


@dataclass
class Cell:
    """One evaluated policy: an oracle, or a ranker trained on a (mixed) log."""

    seed: int
    policy: str
    mix_ratio: float | None
    eval_log: str
    model: str | None = None
    train_log: str | None = None
    status: str = "ok"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Manifest:
    config: dict
    seeds: list[int]
    artifacts: dict[str, str] = field(default_factory=dict)
    cells: list[Cell] = field(default_factory=list)
    raw_logs: dict[str, dict[str, str]] = field(default_factory=dict)   # seed -> strategy -> file
    mixed: list[dict] = field(default_factory=list)
    tool_version: str = __version__
    created: str = ""
    updated: str = ""

    def to_dict(self) -> dict:
        return {"tool_version": self.tool_version, "created": self.created, "updated": self.updated,
                "config": self.config, "seeds": self.seeds, "artifacts": self.artifacts,
                "cells": [c.to_dict() for c in self.cells], "raw_logs": self.raw_logs,
                "mixed": self.mixed}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(d["config"], list(d["seeds"]), dict(d["artifacts"]),
                   [Cell(**c) for c in d["cells"]], d.get("raw_logs", {}), d.get("mixed", []),
                   d.get("tool_version", ""), d.get("created", ""), d.get("updated", ""))


class RunDir:
    """A run directory; per-seed artifacts live under ``seed_<n>/``."""

    def __init__(self, root, cfg: ScenarioConfig | None = None):
        self.root = Path(root)
        self._cfg = cfg

    @property
    def cfg(self) -> ScenarioConfig:
        if self._cfg is None:
            path = self.root / CONFIG
            if not path.is_file():
                raise StageOrderError(f"{self.root} has no {CONFIG}; run the prefs stage first",
                                      path=str(path))
            self._cfg = load_config(path)
        return self._cfg

    def seed_dir(self, seed: int) -> Path:
        return self.root / f"seed_{seed}"

    def rel(self, path) -> str:
        return Path(path).relative_to(self.root).as_posix()

    def init(self, cfg: ScenarioConfig) -> Manifest:
        self.root.mkdir(parents=True, exist_ok=True)
        self._cfg = cfg
        dump_config(cfg, self.root / CONFIG)
        now = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return Manifest(cfg.to_dict(), list(cfg.run.seeds), created=now)

    def load_manifest(self) -> Manifest:
        path = self.root / MANIFEST
        if not path.is_file():
            raise StageOrderError(f"{self.root} has no {MANIFEST}", path=str(path))
        return Manifest.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def open_existing(self, cfg: ScenarioConfig) -> Manifest:
        """The manifest of a run started with exactly ``cfg``."""
        m = self.load_manifest()
        if dumps(config_from_manifest(m)) != dumps(cfg):
            raise StageOrderError("run directory was created with a different configuration",
                                  path=str(self.root))
        self._cfg = cfg
        return m

    def manifest_or_new(self, cfg: ScenarioConfig) -> Manifest:
        if (self.root / MANIFEST).is_file():
            return self.open_existing(cfg)
        return self.init(cfg)

    def write_manifest(self, m: Manifest) -> None:
        """Hash every artifact and write the manifest."""
        files = [self.root / CONFIG]
        for seed in m.seeds:
            d = self.seed_dir(seed)
            if d.is_dir():
                files += sorted(p for p in d.iterdir() if p.is_file())
        for name in ("report.csv", "report.json", "curves.csv"):
            if (self.root / name).is_file():
                files.append(self.root / name)
        m.artifacts = {self.rel(p): sha256(p) for p in files}
        m.updated = datetime.now(timezone.utc).isoformat(timespec="seconds")
        (self.root / MANIFEST).write_text(json.dumps(m.to_dict(), sort_keys=True, indent=1),
                                          encoding="utf-8")

    def write_reports(self, reports: list[MetricReport]) -> None:
        (self.root / "report.csv").write_text(reports_csv(reports), encoding="utf-8")
        (self.root / "report.json").write_text(report_json(reports), encoding="utf-8")
        (self.root / "curves.csv").write_text(curves_csv(reports), encoding="utf-8")

    def load_reports(self) -> list[MetricReport]:
        path = self.root / "report.json"
        if not path.is_file():
            return []
        return [MetricReport.from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))]

    def check_hashes(self, m: Manifest) -> list[str]:
        problems = []
        for rel, digest in sorted(m.artifacts.items()):
            p = self.root / rel
            if not p.is_file():
                problems.append(f"missing artifact {rel}")
            elif sha256(p) != digest:
                problems.append(f"hash mismatch for {rel}")
        return problems


def config_from_manifest(m: Manifest) -> ScenarioConfig:
    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items() if v is not None}
        return x

    d = clean(m.config)
    for k in TRAIN_DERIVED:
        d.get("train", {}).pop(k, None)
    return from_dict(d)


def raise_if(problems: list[str], what: str) -> None:
    if problems:
        raise VerificationError(f"{what}: {len(problems)} problem(s); first: {problems[0]}",
                                problems=problems[:20])

