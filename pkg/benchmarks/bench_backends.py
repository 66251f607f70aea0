"""Time the compiled and pure-numpy HFPI kernels against each other.

    python benchmarks/bench_backends.py --repeat 5 --csv backends.csv

Inner rows run up to ``--iters`` dual iterations (eps2 is tiny so the cap
usually decides; a run can stop early when the dual step is exactly zero,
so speedups compare time per iteration). Outer rows time a whole FP-HFPI
solve with each backend forced through ``HfpiConfig.backend``. ``max_diff``
is the largest dual difference (inner) or WSR difference in bits (outer)
between the two backends.
"""
import argparse
import csv
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from rsma_hfpi import _backend
from rsma_hfpi.channel_model import sample_iid_rayleigh
from rsma_hfpi.fp_transform import tight_aux
from rsma_hfpi.hfpi import HfpiConfig, hfpi_solve, initial_duals
from rsma_hfpi.solvers import OuterConfig, initialize_beamformers, solve


@dataclass
class Row:
    kind: str  # inner | inner_reduced | outer
    L: int
    K: int
    backend: str
    iters: int
    best_s: float
    median_s: float
    speedup: float = 1.0
    max_diff: float = 0.0


def _time(fn, repeat):
    ts = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t)
    return out, min(ts), float(np.median(ts))


def bench_inner(L, K, iters, repeat, reduced=False):
    ch = sample_iid_rayleigh(L, K, power_budget=100.0, seed=0)
    aux = tight_aux(initialize_beamformers(ch), ch)
    d0 = initial_duals(ch.weights, ch.power_budget)
    F = ch.H.conj().T @ ch.H if reduced else None
    rows, lams = [], {}
    for name in _backend.available():
        cfg = HfpiConfig(eps2=1e-300, max_inner_iters=iters, backend=name)
        res, best, med = _time(lambda: hfpi_solve(aux, ch, d0, cfg, F=F), repeat)
        lams[name] = res.duals.lam
        rows.append(Row("inner_reduced" if reduced else "inner", L, K, name, res.iterations, best, med))
    _finish(rows)
    if len(lams) == 2:
        diff = float(np.abs(lams["python"] - lams["cython"]).max())
        for r in rows:
            r.max_diff = diff
    return rows


def bench_outer(L, K, repeat, variant="fp_hfpi"):
    ch = sample_iid_rayleigh(L, K, power_budget=100.0, seed=1)
    rows, vals = [], {}
    for name in _backend.available():
        cfg = OuterConfig(variant=variant, hfpi=replace(HfpiConfig(), backend=name))
        rep, best, med = _time(lambda: solve(ch, cfg), repeat)
        vals[name] = rep.final_wsr_bits
        rows.append(Row("outer", L, K, name, rep.total_inner_iters, best, med))
    _finish(rows)
    if len(vals) == 2:
        for r in rows:
            r.max_diff = abs(vals["python"] - vals["cython"])
    return rows


def _finish(rows):
    ref = next((r.best_s / r.iters for r in rows if r.backend == "python"), None)
    for r in rows:
        r.speedup = ref / (r.best_s / r.iters) if ref else 1.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", default="4x4,16x4,64x8,256x8", help="comma list of LxK")
    ap.add_argument("--iters", type=int, default=300, help="inner iterations per timing")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--no-outer", action="store_true", help="skip whole-solve timings")
    ap.add_argument("--csv", default=None, help="also write rows here")
    args = ap.parse_args(argv)

    if "cython" not in _backend.available():
        print("compiled kernels not built; only the python backend will be timed", file=sys.stderr)
    sizes = [tuple(int(x) for x in s.split("x")) for s in args.sizes.split(",")]
    rows = []
    for L, K in sizes:
        rows += bench_inner(L, K, args.iters, args.repeat)
        rows += bench_inner(L, K, args.iters, args.repeat, reduced=True)
        if not args.no_outer and L <= 64:
            rows += bench_outer(L, K, args.repeat)

    print(f"{'kind':<14}{'L':>5}{'K':>4}{'backend':>9}{'iters':>8}{'best[ms]':>11}"
          f"{'median[ms]':>12}{'speedup':>9}{'max_diff':>10}")
    for r in rows:
        print(f"{r.kind:<14}{r.L:>5}{r.K:>4}{r.backend:>9}{r.iters:>8}{r.best_s * 1e3:>11.2f}"
              f"{r.median_s * 1e3:>12.2f}{r.speedup:>9.1f}{r.max_diff:>10.1e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(asdict(rows[0])))
            w.writeheader()
            w.writerows(asdict(r) for r in rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
