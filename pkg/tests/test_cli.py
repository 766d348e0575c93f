import json
import subprocess
import sys

import pytest

from manipsim.cli import main

SMALL = "[run]\nn_users = 12\nseeds = [0]\n[slate]\nn_groups = 4\n[train]\nepochs = 2\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL)
    return p


def test_staged_pipeline(capsys, tmp_path, cfg_file):
    out = tmp_path / "run"
    assert run(capsys, "prefs", "--config", cfg_file, "--out", out)[0] == 0
    for s in ("greedy", "unbiased"):
        assert run(capsys, "collect", "--config", cfg_file, "--strategy", s, "--out", out)[0] == 0
    seed = out / "seed_0"
    mixed = seed / "mixed.jsonl"
    code, text, _ = run(capsys, "mixdata", "--a", seed / "log_greedy.jsonl", "--b", seed / "log_unbiased.jsonl",
                        "--ratio", 0.4, "--out", mixed)
    assert code == 0 and json.loads(text)["rows"] == 12 * 10
    code, text, _ = run(capsys, "train", "--config", cfg_file, "--log", mixed, "--model", "slate-aware",
                        "--out", seed / "m.bin")
    assert code == 0 and "offline_auc" in json.loads(text)
    code, text, _ = run(capsys, "eval", "--config", cfg_file, "--model", seed / "m.bin", "--train-log", mixed,
                        "--out", out)
    assert code == 0 and json.loads(text)["policy"] == "slate-aware"
    assert run(capsys, "eval", "--config", cfg_file, "--oracle", "greedy", "--out", out)[0] == 0
    code, text, _ = run(capsys, "verify", "--out", out, "--deep")
    assert code == 0 and json.loads(text)["reports"] == 2


def test_mixdata_ratio_zero_is_the_baseline(capsys, tmp_path, cfg_file):
    out = tmp_path / "run"
    run(capsys, "prefs", "--config", cfg_file, "--out", out)
    run(capsys, "collect", "--config", cfg_file, "--strategy", "greedy", "--out", out)
    run(capsys, "collect", "--config", cfg_file, "--strategy", "unbiased", "--out", out)
    a, b = out / "seed_0" / "log_greedy.jsonl", out / "seed_0" / "log_unbiased.jsonl"
    run(capsys, "mixdata", "--a", a, "--b", b, "--ratio", 0, "--out", tmp_path / "m0.jsonl")
    run(capsys, "mixdata", "--a", a, "--b", b, "--ratio", 1, "--out", tmp_path / "m1.jsonl")
    assert (tmp_path / "m0.jsonl").read_bytes() == b.read_bytes()
    assert (tmp_path / "m1.jsonl").read_bytes() == a.read_bytes()


def test_error_codes_and_json(capsys, tmp_path, cfg_file):
    bad = tmp_path / "bad.toml"
    bad.write_text("[slate]\nexam_probs = [1.0, 0.5]\n")
    code, _, err = run(capsys, "prefs", "--config", bad, "--out", tmp_path / "x")
    payload = json.loads(err)
    assert code == 2 and payload["code"] == "config_error"
    assert payload["context"]["key"] == "slate.exam_probs"

    code, _, err = run(capsys, "collect", "--config", cfg_file, "--strategy", "greedy", "--out", tmp_path / "none")
    assert code == 3 and json.loads(err)["code"] == "stage_prerequisite"

    code, _, err = run(capsys, "train", "--config", cfg_file, "--log", tmp_path / "missing.jsonl",
                       "--model", "pointwise", "--out", tmp_path / "m.bin")
    assert code == 3

    code, _, _ = run(capsys, "mixdata", "--a", "x", "--b", "y", "--ratio", 1.5, "--out", tmp_path / "o")
    assert code == 2

    out = tmp_path / "run"
    run(capsys, "prefs", "--config", cfg_file, "--out", out)
    code, _, err = run(capsys, "collect", "--config", cfg_file, "--strategy", "planner", "--out", out)
    assert code == 2 and json.loads(err)["context"]["key"] == "strategy"

    other = tmp_path / "other.toml"
    other.write_text(SMALL.replace("n_users = 12", "n_users = 13"))
    code, _, _ = run(capsys, "collect", "--config", other, "--strategy", "greedy", "--out", out)
    assert code == 3


def test_sweep_and_tampered_verify(capsys, tmp_path, cfg_file):
    out = tmp_path / "run"
    code, text, _ = run(capsys, "sweep", "--config", cfg_file, "--ratios", "0,0.2,0.4,0.6,0.8,1",
                        "--models", "pointwise,slate-aware", "--seeds", "0,1,2", "--out", out)
    assert code == 0 and json.loads(text)["rows"] == 36
    assert len((out / "report.csv").read_text().splitlines()) == 37
    assert run(capsys, "verify", "--out", out)[0] == 0
    rep = out / "report.csv"
    rep.write_text(rep.read_text().replace("pointwise", "pointwise ", 1))
    code, _, err = run(capsys, "verify", "--out", out)
    assert code == 4 and json.loads(err)["code"] == "verification_failed"


def test_bad_sweep_arguments(capsys, tmp_path, cfg_file):
    code, _, _ = run(capsys, "sweep", "--config", cfg_file, "--ratios", "a,b", "--out", tmp_path / "r")
    assert code == 2
    code, _, _ = run(capsys, "sweep", "--config", cfg_file, "--models", "deepfm", "--out", tmp_path / "r")
    assert code == 2


def test_config_reference_and_module_entry_point(capsys):
    code, text, _ = run(capsys, "config-reference")
    assert code == 0 and "[run]" in text
    proc = subprocess.run([sys.executable, "-m", "manipsim", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "manipsim" in proc.stdout
