"""Experiment runner: parameter sweeps over seeded channel draws, CSV output.

Config files are ``key = value`` lines; ``#`` starts a comment. Keys:

==================  =========================================  ===========
key                 meaning                                    default
==================  =========================================  ===========
sweep_variable      snr_db | num_antennas |                    (required)
                    num_users_equal_antennas | kappa | rho |
                    eps2
sweep_values        comma-separated numbers                    (required)
L, K                antennas, users                            4, 4
snr_db              transmit SNR in dB (P_t = sigma^2 10^(x/10))  20
power_budget        P_t directly (overrides snr_db)            --
noise_power         sigma_k^2, same for every user             1
weights             scalar or K comma-separated values         1
kappa               CSIT quality; > 0 selects one-ring channels 0
rho, eps1, eps2     solver tolerances                          0.5, 1e-4, 1e-3
max_outer_iters     outer cap                                  500
max_inner_iters     inner cap                                  2000
variants            comma list of solver variants              fp_hfpi
num_realizations    seeds per sweep value                      1
base_seed           seed of realization 0                      0
init_policy         mrt_split | random                         mrt_split
angle_spread_deg    one-ring half spread                       10
antenna_spacing     element spacing in wavelengths             0.5
output_path         output directory                           results
==================  =========================================  ===========

WSR columns are in bits/s/Hz.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .channel_model import (CorrelationModel, one_ring_factors, sample_iid_rayleigh,
                            sample_imperfect_csit)
from .errors import ParseError
from .hfpi import HfpiConfig
from .solvers import VARIANTS, OuterConfig, fp_hfpi_solve_imperfect, solve

SWEEPS = ("snr_db", "num_antennas", "num_users_equal_antennas", "kappa", "rho", "eps2")
ROW_FIELDS = ["sweep_value", "variant", "seed", "final_wsr", "wall_time_seconds", "outer_iters",
              "total_inner_iters", "power_used", "converged", "kkt_stationarity"]
TRACE_FIELDS = ["iteration", "wsr", "inner_iters", "power"]
LN2 = np.log(2.0)


@dataclass
class ExperimentSpec:
    sweep_variable: str
    sweep_values: List[float]
    L: int = 4
    K: int = 4
    snr_db: Optional[float] = 20.0
    power_budget: Optional[float] = None
    noise_power: float = 1.0
    weights: List[float] = field(default_factory=lambda: [1.0])
    kappa: float = 0.0
    rho: float = 0.5
    eps1: float = 1e-4
    eps2: float = 1e-3
    max_outer_iters: int = 500
    max_inner_iters: int = 2000
    variants: List[str] = field(default_factory=lambda: ["fp_hfpi"])
    num_realizations: int = 1
    base_seed: int = 0
    init_policy: str = "mrt_split"
    angle_spread_deg: float = 10.0
    antenna_spacing: float = 0.5
    output_path: str = "results"

    def validate(self) -> "ExperimentSpec":
        if self.sweep_variable not in SWEEPS:
            raise ParseError(f"sweep_variable: unknown value {self.sweep_variable!r}")
        if not self.sweep_values:
            raise ParseError("sweep_values: must be nonempty")
        if self.num_realizations < 1:
            raise ParseError("num_realizations: must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise ParseError(f"variants: unknown variant {v!r}")
        if self.imperfect:
            bad = [v for v in self.variants if v not in ("fp_hfpi", "fp_hfpi_s")]
            if bad:
                raise ParseError(f"variants: {bad} do not support imperfect CSIT")
        if len(self.weights) not in (1, self.K) and self.sweep_variable != "num_users_equal_antennas":
            raise ParseError("weights: need 1 or K values")
        if self.init_policy not in ("mrt_split", "random"):
            raise ParseError(f"init_policy: unknown value {self.init_policy!r}")
        return self

    @property
    def imperfect(self) -> bool:
        return self.sweep_variable == "kappa" or self.kappa > 0

    def power(self, snr_db: Optional[float] = None) -> float:
        if snr_db is None and self.power_budget is not None:
            return self.power_budget
        snr = self.snr_db if snr_db is None else snr_db
        return self.noise_power * 10 ** (snr / 10)


_INT_KEYS = {"L", "K", "max_outer_iters", "max_inner_iters", "num_realizations", "base_seed"}
_FLOAT_KEYS = {"snr_db", "power_budget", "noise_power", "kappa", "rho", "eps1", "eps2",
               "angle_spread_deg", "antenna_spacing"}
_LIST_KEYS = {"sweep_values", "weights"}
_STR_KEYS = {"sweep_variable", "init_policy", "output_path"}


def parse_spec_text(text: str) -> ExperimentSpec:
    """Parse the key-value schema; errors name the key and line."""
    vals: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                vals[key] = int(value)
            elif key in _FLOAT_KEYS:
                vals[key] = float(value)
            elif key in _LIST_KEYS:
                vals[key] = [float(x) for x in value.split(",") if x.strip()]
            elif key == "variants":
                vals[key] = [x.strip() for x in value.split(",") if x.strip()]
            elif key in _STR_KEYS:
                vals[key] = value
            else:
                raise ParseError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: bad value for {key!r}: {value!r}") from None
    for req in ("sweep_variable", "sweep_values"):
        if req not in vals:
            raise ParseError(f"missing required key {req!r}")
    if "power_budget" in vals and "snr_db" not in vals:
        vals["snr_db"] = None
    return ExperimentSpec(**vals).validate()


def parse_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec_text(fh.read())


# --- running -----------------------------------------------------------------

def _cell(spec: ExperimentSpec, value: float):
    """Per-sweep-value parameters: (L, K, P, kappa, rho, eps2)."""
    L, K, P = spec.L, spec.K, spec.power()
    kappa, rho, eps2 = spec.kappa, spec.rho, spec.eps2
    var = spec.sweep_variable
    if var == "snr_db":
        P = spec.power(value)
    elif var == "num_antennas":
        L = int(value)
    elif var == "num_users_equal_antennas":
        L = K = int(value)
    elif var == "kappa":
        kappa = value
    elif var == "rho":
        rho = value
    elif var == "eps2":
        eps2 = value
    return L, K, P, kappa, rho, eps2


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _run_cell(spec: ExperimentSpec, value: float, seed: int):
    L, K, P, kappa, rho, eps2 = _cell(spec, value)
    weights = spec.weights if len(spec.weights) == K else spec.weights[:1] * K
    inner = HfpiConfig(rho=rho, eps2=eps2, max_inner_iters=spec.max_inner_iters)
    base = OuterConfig(eps1=spec.eps1, max_outer_iters=spec.max_outer_iters, hfpi=inner,
                       init_policy=spec.init_policy, seed=seed)
    if spec.imperfect:
        model = CorrelationModel(np.linspace(-np.pi / 3, np.pi / 3, K),
                                 np.deg2rad(spec.angle_spread_deg), spec.antenna_spacing)
        imch = sample_imperfect_csit(one_ring_factors(model, L), kappa, seed)
    else:
        ch = sample_iid_rayleigh(L, K, spec.noise_power, weights, P, seed)
    rows, traces = [], {}
    for v in spec.variants:
        cfg = replace(base, variant=v)
        if spec.imperfect:
            rep = fp_hfpi_solve_imperfect(imch, spec.noise_power, weights, P, cfg)
        else:
            rep = solve(ch, cfg)
        kkt = "" if rep.final_kkt is None else _fmt(
            max(rep.final_kkt.normalized().stationarity_common,
                rep.final_kkt.normalized().stationarity_private))
        rows.append([_fmt(value), v, str(seed), _fmt(rep.final_wsr / LN2), _fmt(rep.wall_time),
                     _fmt(rep.outer_iters), _fmt(rep.total_inner_iters), _fmt(rep.power_used),
                     _fmt(rep.converged), kkt])
        inner_its = [0] + list(rep.inner_iters_trajectory)
        traces[(v, seed)] = [[str(i), _fmt(w / LN2), str(n), _fmt(p)] for i, (w, n, p) in
                             enumerate(zip(rep.wsr_trajectory, inner_its, rep.power_trajectory))]
    return rows, traces


def _trace_name(spec, value, variant, seed):
    return f"{spec.sweep_variable}{value:g}_{variant}_{seed}.csv"


def run_experiment(spec: ExperimentSpec, threads: int = 1, out: Optional[str] = None):
    """Run every (sweep value, seed, variant); write results.csv and traces/.

    Returns the list of result rows (strings, in ``ROW_FIELDS`` order).
    """
    outdir = out or spec.output_path
    os.makedirs(os.path.join(outdir, "traces"), exist_ok=True)
    results_path = os.path.join(outdir, "results.csv")
    with open(results_path, "w", encoding="utf-8"):  # fail before solving if unwritable
        pass
    cells = [(v, spec.base_seed + i) for v in spec.sweep_values
             for i in range(spec.num_realizations)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(_run_cell, [spec] * len(cells), *zip(*cells)))
    else:
        outs = [_run_cell(spec, v, s) for v, s in cells]
    rows = []
    for (value, seed), (cell_rows, traces) in zip(cells, outs):
        rows.extend(cell_rows)
        for (variant, sd), trace in traces.items():
            path = os.path.join(outdir, "traces", _trace_name(spec, value, variant, sd))
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(TRACE_FIELDS)
                w.writerows(trace)
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        w.writerows(rows)
    return rows


def summarize(rows: List[Dict[str, str]]) -> List[Dict[str, float]]:
    """Mean and standard error per (sweep_value, variant); time by mean and median."""
    groups: Dict[tuple, List[Dict[str, str]]] = {}
    for r in rows:
        groups.setdefault((float(r["sweep_value"]), r["variant"]), []).append(r)
    out = []
    for (value, variant), rs in groups.items():
        rec = {"sweep_value": value, "variant": variant, "n": len(rs)}
        for col in ("final_wsr", "outer_iters", "total_inner_iters", "power_used"):
            x = np.array([float(r[col]) for r in rs])
            rec[f"{col}_mean"] = float(x.mean())
            rec[f"{col}_stderr"] = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
        t = np.array([float(r["wall_time_seconds"]) for r in rs])
        rec["time_mean"] = float(t.mean())
        rec["time_median"] = float(np.median(t))
        rec["converged_frac"] = float(np.mean([r["converged"] in ("1", "True") for r in rs]))
        out.append(rec)
    return out


def read_results(path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_summary(summary, stream) -> None:
    if not summary:
        return
    w = csv.DictWriter(stream, fieldnames=list(summary[0]), lineterminator="\n")
    w.writeheader()
    for rec in summary:
        w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in rec.items()})


def _demo(args) -> int:
    variants = args.variant or list(VARIANTS)
    spec = ExperimentSpec(sweep_variable="snr_db", sweep_values=[20.0], variants=variants,
                          base_seed=args.seed if args.seed is not None else 0)
    spec.validate()
    out = args.out or os.path.join(os.getcwd(), "demo_results")
    rows = run_experiment(spec, threads=args.threads, out=out)
    print(f"L=K=4, SNR 20 dB, seed {spec.base_seed}  (WSR in bit/s/Hz)")
    print(f"{'variant':<14}{'WSR':>10}{'outer':>7}{'inner':>7}{'time[s]':>10}")
    for r in rows:
        print(f"{r[1]:<14}{float(r[3]):>10.4f}{r[5]:>7}{r[6]:>7}{float(r[4]):>10.4f}")
    print(f"results written to {out}")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="rsma-bench", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override base_seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--variant", action="append", choices=VARIANTS,
                        help="solver variant (repeatable); overrides the config")
    pr = sub.add_parser("run", parents=[common], help="run an experiment config")
    pr.add_argument("spec_file")
    ps = sub.add_parser("summarize", parents=[common], help="aggregate a results.csv")
    ps.add_argument("csv_file")
    sub.add_parser("demo", parents=[common], help="L=K=4, 20 dB showcase")
    args = p.parse_args(argv)

    try:
        if args.cmd == "run":
            spec = parse_spec(args.spec_file)
            if args.seed is not None:
                spec.base_seed = args.seed
            if args.variant:
                spec.variants = list(args.variant)
            spec.validate()
            rows = run_experiment(spec, threads=args.threads, out=args.out)
            print(f"{len(rows)} rows written to {os.path.join(args.out or spec.output_path, 'results.csv')}")
            return 0
        if args.cmd == "summarize":
            summary = summarize(read_results(args.csv_file))
            if args.out:
                with open(args.out, "w", newline="", encoding="utf-8") as fh:
                    _write_summary(summary, fh)
            else:
                _write_summary(summary, sys.stdout)
            return 0
        return _demo(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
