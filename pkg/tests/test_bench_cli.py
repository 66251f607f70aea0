import csv
import os

import numpy as np
import pytest

from rsma_hfpi.bench_cli import (ROW_FIELDS, TRACE_FIELDS, ExperimentSpec, main, parse_spec,
                                 parse_spec_text, read_results, run_experiment, summarize)
from rsma_hfpi.errors import ParseError

BASIC = """
# small sweep
sweep_variable = snr_db
sweep_values = 10, 20
num_realizations = 2
variants = fp_hfpi, rfp_hfpi
max_outer_iters = 30
"""


def test_defaults():
    spec = parse_spec_text("sweep_variable = rho\nsweep_values = 0.5\n")
    assert (spec.L, spec.K, spec.rho, spec.eps1, spec.eps2) == (4, 4, 0.5, 1e-4, 1e-3)
    assert spec.variants == ["fp_hfpi"] and spec.weights == [1.0]
    assert spec.power() == pytest.approx(100.0)
    assert not spec.imperfect


def test_snr_to_power():
    spec = parse_spec_text("sweep_variable = snr_db\nsweep_values = 30\nnoise_power = 2\n")
    assert spec.power(30.0) == pytest.approx(2000.0)
    spec = parse_spec_text("sweep_variable = num_antennas\nsweep_values = 8\npower_budget = 7\n")
    assert spec.power() == 7.0 and spec.snr_db is None


@pytest.mark.parametrize("text,needle", [
    ("sweep_variable = snr_db\nsweep_values = 1\nL = four\n", "line 3"),
    ("sweep_variable = snr_db\nsweep_values = 1\nfoo = 1\n", "'foo'"),
    ("sweep_variable = snr_db\nsweep_values 1\n", "line 2"),
    ("sweep_values = 1\n", "sweep_variable"),
    ("sweep_variable = snr\nsweep_values = 1\n", "sweep_variable"),
    ("sweep_variable = snr_db\nsweep_values = 1\nvariants = wmmse\n", "variants"),
    ("sweep_variable = kappa\nsweep_values = 0.3\nvariants = rfp_hfpi\n", "imperfect"),
    ("sweep_variable = snr_db\nsweep_values = 1\nweights = 1, 2\n", "weights"),
])
def test_malformed(text, needle):
    with pytest.raises(ParseError, match=needle):
        parse_spec_text(text)


def test_parse_file(tmp_path):
    p = tmp_path / "spec.cfg"
    p.write_text(BASIC)
    spec = parse_spec(p)
    assert spec.sweep_values == [10.0, 20.0] and spec.variants == ["fp_hfpi", "rfp_hfpi"]


def _strip_time(rows):
    i = ROW_FIELDS.index("wall_time_seconds")
    return [r[:i] + r[i + 1:] for r in rows]


def test_run_rows_and_traces(tmp_path):
    spec = parse_spec_text(BASIC)
    rows = run_experiment(spec, out=str(tmp_path / "a"))
    assert len(rows) == 2 * 2 * 2
    got = read_results(tmp_path / "a" / "results.csv")
    assert list(got[0]) == ROW_FIELDS and len(got) == 8
    assert {r["seed"] for r in got} == {"0", "1"}
    traces = sorted(os.listdir(tmp_path / "a" / "traces"))
    assert len(traces) == 8 and "snr_db10_fp_hfpi_0.csv" in traces
    with open(tmp_path / "a" / "traces" / "snr_db20_rfp_hfpi_1.csv") as fh:
        tr = list(csv.reader(fh))
    assert tr[0] == TRACE_FIELDS
    w = [float(r[1]) for r in tr[1:]]
    assert np.all(np.diff(w) >= -1e-8)
    final = [r for r in got if r["sweep_value"] == "20" and r["variant"] == "rfp_hfpi" and r["seed"] == "1"]
    assert float(final[0]["final_wsr"]) == pytest.approx(w[-1], rel=1e-10)


def test_deterministic_except_timing(tmp_path):
    spec = parse_spec_text(BASIC)
    a = run_experiment(spec, out=str(tmp_path / "a"))
    b = run_experiment(spec, threads=2, out=str(tmp_path / "b"))
    assert _strip_time(a) == _strip_time(b)


def test_kappa_sweep(tmp_path):
    spec = parse_spec_text("sweep_variable = kappa\nsweep_values = 0, 0.9\nL = 8\nmax_outer_iters = 50\n")
    rows = run_experiment(spec, out=str(tmp_path))
    assert float(rows[0][3]) > float(rows[1][3])


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    spec = parse_spec_text(BASIC)
    with pytest.raises(OSError):
        run_experiment(spec, out=str(blocker / "sub"))


def _row(value, variant, wsr, t=0.1, conv="1"):
    return {"sweep_value": str(value), "variant": variant, "final_wsr": str(wsr),
            "outer_iters": "5", "total_inner_iters": "50", "power_used": "100",
            "wall_time_seconds": str(t), "converged": conv}


def test_summarize_single_and_constant():
    s = summarize([_row(20, "fp_hfpi", 3.0)])
    assert s[0]["n"] == 1 and s[0]["final_wsr_mean"] == 3.0 and s[0]["final_wsr_stderr"] == 0.0
    s = summarize([_row(20, "fp_hfpi", 3.0) for _ in range(4)])
    assert s[0]["final_wsr_stderr"] == 0.0


def test_summarize_synthetic():
    vals = [1.0, 2.0, 3.0, 6.0]
    rows = [_row(10, "fp_hfpi", v, t=v, conv="1" if v < 5 else "0") for v in vals]
    rows.append(_row(20, "fp_hfpi", 9.0))
    s = {(r["sweep_value"], r["variant"]): r for r in summarize(rows)}
    r = s[(10.0, "fp_hfpi")]
    assert r["final_wsr_mean"] == pytest.approx(3.0)
    assert r["final_wsr_stderr"] == pytest.approx(np.std(vals, ddof=1) / 2)
    assert r["time_median"] == pytest.approx(2.5)
    assert r["converged_frac"] == 0.75
    assert s[(20.0, "fp_hfpi")]["n"] == 1


def test_cli_run_and_summarize(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(BASIC)
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out), "--variant", "fp_hfpi_s", "--seed", "5"]) == 0
    got = read_results(out / "results.csv")
    assert {r["variant"] for r in got} == {"fp_hfpi_s"}
    assert {r["seed"] for r in got} == {"5", "6"}
    assert main(["summarize", str(out / "results.csv")]) == 0
    text = capsys.readouterr().out
    assert "final_wsr_mean" in text and "fp_hfpi_s" in text


def test_cli_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("sweep_variable = snr_db\nsweep_values = 1\nL = four\n")
    assert main(["run", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_cli_demo(tmp_path, capsys):
    assert main(["demo", "--out", str(tmp_path), "--variant", "fp_hfpi"]) == 0
    out = capsys.readouterr().out
    assert "fp_hfpi" in out and (tmp_path / "results.csv").exists()


def test_spec_dataclass_direct():
    spec = ExperimentSpec(sweep_variable="eps2", sweep_values=[1e-3])
    assert spec.validate() is spec
