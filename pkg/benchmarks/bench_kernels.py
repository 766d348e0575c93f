"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both backends are run on identical inputs; results must agree to 1e-12.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from manipsim.kernels import _pure

try:
    from manipsim.kernels import _core
except ImportError:
    _core = None


def cases(rng: np.random.Generator):
    attrs3 = rng.uniform(0, 1, size=(3, 2))
    exam3 = np.array([1.0, 0.8, 0.6])
    attrs5 = rng.uniform(0, 1, size=(5, 2))
    exam5 = np.array([1.0, 0.9, 0.7, 0.5, 0.4])
    batch = rng.uniform(0, 1, size=(2000, 3, 2))
    prefs = rng.uniform(0, 1, size=10)
    quals = np.linspace(0, 1, 10)
    seq = (8.0, 20, 1.0, 0.8, 0.1, 4.0, 0.2)
    return {
        "rrm_slate_probs K=3": ("rrm_slate_probs", (attrs3, exam3, -1.0), 2000),
        "rrm_slate_probs K=5": ("rrm_slate_probs", (attrs5, exam5, -1.0), 500),
        "rrm_batch_slate_probs 2000x3": ("rrm_batch_slate_probs", (batch, exam3, -1.0), 5),
        "planner_values 10 topics, 20 rounds": ("planner_values", (prefs, quals, *seq), 500),
    }


def run(repeat: int) -> list[dict]:
    rng = np.random.default_rng(0)
    rows = []
    for label, (fn, args, number) in cases(rng).items():
        pure_fn = getattr(_pure, fn)
        t_pure = min(timeit.repeat(lambda: pure_fn(*args), number=number, repeat=repeat)) / number
        row = {"case": label, "python_us": t_pure * 1e6, "cython_us": None, "speedup": None}
        if _core is not None:
            core_fn = getattr(_core, fn)
            np.testing.assert_allclose(core_fn(*args), pure_fn(*args), rtol=1e-12, atol=1e-12)
            t_core = min(timeit.repeat(lambda: core_fn(*args), number=number, repeat=repeat)) / number
            row["cython_us"] = t_core * 1e6
            row["speedup"] = t_pure / t_core
        rows.append(row)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write the results here")
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    rows = run(args.repeat)
    print(f"{'case':40s} {'python (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for r in rows:
        cy = "-" if r["cython_us"] is None else f"{r['cython_us']:12.2f}"
        sp = "-" if r["speedup"] is None else f"{r['speedup']:7.1f}x"
        print(f"{r['case']:40s} {r['python_us']:12.2f} {cy:>12s} {sp:>8s}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
