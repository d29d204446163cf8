"""Compare the compiled and pure-Python term kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Reports best-of-N wall time for raw ``mul_terms`` on synthetic term maps
and for one end-to-end associativity sample on the nonconstant jet case.
The end-to-end rows run in subprocesses because the kernel is chosen at
import time.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import subprocess
import sys
import time
from pathlib import Path

from gmpy2 import mpq

from fedosov import _pykernels

try:
    from fedosov import _ckernels
except ImportError:  # extension not built
    _ckernels = None

ROOT = Path(__file__).resolve().parent.parent

E2E_SNIPPET = """
import time
from fedosov.pipeline import Job, load_config
from fedosov.verifier import associativity_residuals, sample_tuples
job = Job(load_config({cfg!r}))
fn = job.star_fn
t0 = time.perf_counter()
job.connection
triples = sample_tuples(job.ring, 3, 3, 3, 3)
for t in triples:
    associativity_residuals(fn, *t, job.cfg.hbar_order)
print(time.perf_counter() - t0)
"""


def term_map(rng: random.Random, size: int, nvars: int, max_exp: int, den: int) -> dict:
    """Random packed map with 8 bits per variable, as the base ring packs small jets."""
    out = {}
    for _ in range(size):
        key = sum(rng.randint(0, max_exp) << (8 * i) for i in range(nvars))
        out[key] = mpq(rng.randint(-50, 50), rng.randint(1, den))
    return out


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def synthetic(repeat: int) -> list[dict]:
    rng = random.Random(0)
    rows = []
    for label, size, nvars, max_exp, den, calls in (
        ("small dense (8x8 terms, 2 vars)", 8, 2, 3, 6, 2000),
        ("medium dense (40x40, 2 vars)", 40, 2, 8, 36, 100),
        ("sparse (60x60, 4 vars)", 60, 4, 6, 7, 50),
    ):
        a, b = term_map(rng, size, nvars, max_exp, den), term_map(rng, size, nvars, max_exp, den)
        row = {"case": label}
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                row[name] = None
                continue
            row[name] = best_of(lambda: [mod.mul_terms(a, b, None) for _ in range(calls)], repeat)
        rows.append(row)
    return rows


def end_to_end(repeat: int) -> dict:
    code = E2E_SNIPPET.format(cfg=str(ROOT / "configs" / "jet2d.json"))
    row: dict = {"case": "3 associativity samples, jet(6) case"}
    for name, env in (("python", {"FEDOSOV_PURE_PYTHON": "1"}), ("cython", {})):
        if name == "cython" and _ckernels is None:
            row[name] = None
            continue
        full = {k: v for k, v in os.environ.items() if k != "FEDOSOV_PURE_PYTHON"}
        full.update(env)
        times = []
        for _ in range(repeat):
            out = subprocess.run([sys.executable, "-c", code], env=full, check=True,
                                 capture_output=True, text=True)
            times.append(float(out.stdout.strip()))
        row[name] = min(times)
    return row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-e2e", action="store_true", help="only the synthetic kernel rows")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rows = synthetic(args.repeat)
    if not args.skip_e2e:
        rows.append(end_to_end(max(1, args.repeat // 2)))
    for r in rows:
        if r.get("python") and r.get("cython"):
            r["speedup"] = r["python"] / r["cython"]
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'case':42} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for r in rows:
        fmt = lambda v: f"{v:10.3f}" if v is not None else f"{'n/a':>10}"  # noqa: E731
        sp = f"{r['speedup']:7.2f}x" if "speedup" in r else f"{'n/a':>8}"
        print(f"{r['case']:42} {fmt(r['python'])} {fmt(r['cython'])} {sp}")


if __name__ == "__main__":
    main()
