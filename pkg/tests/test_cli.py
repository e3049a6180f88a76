import json
import subprocess
import sys

import numpy as np
import pytest

from akf import adaptive, cli, report
from akf.numerics import symmetrize


def rows_by_key(path):
    meta, header, rows = report.read_csv(path)
    idx = {h: i for i, h in enumerate(header)}
    return meta, {(r[idx["r_scale"]], r[idx["q_scale"]], r[idx["state"]]): float(r[idx["mean_mse"]]) for r in rows}


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_grid_single_seed_diagonal(tmp_path):
    out = tmp_path / "g"
    assert cli.main(["grid", "--seeds", "1", "--filter", "cekf", "--quiet", "--out", str(out)]) == 0
    meta, cells = rows_by_key(out / "table1.csv")
    assert {"version", "config_hash", "master_seed"} <= set(meta)
    diag = [cells[(s, s, "pos")] for s in ("0.01", "0.1", "1.0", "10.0", "100.0")]
    np.testing.assert_allclose(diag, diag[0], rtol=1e-9)
    assert not (out / "table2.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metadata"]["master_seed"] == 0


def test_grid_alpha_one_equals_cekf(tmp_path):
    a, c = tmp_path / "a", tmp_path / "c"
    cli.main(["grid", "--seeds", "3", "--filter", "aekf", "--alpha", "1.0", "--quiet", "--out", str(a)])
    cli.main(["grid", "--seeds", "3", "--filter", "cekf", "--quiet", "--out", str(c)])
    assert rows_by_key(a / "table2.csv")[1] == rows_by_key(c / "table1.csv")[1]


def test_csv_floats_round_trip(tmp_path):
    out = tmp_path / "g"
    cli.main(["grid", "--seeds", "2", "--filter", "cekf", "--quiet", "--out", str(out)])
    _, cells = rows_by_key(out / "table1.csv")
    summary = json.loads((out / "summary.json").read_text())
    assert cells[("1.0", "1.0", "pos")] == summary["cekf"]["position_mean_mse"][2][2]


@pytest.mark.parametrize(
    "content, command",
    [("{not json", "grid"), ({"bogus": 1}, "grid"), ({"linear": {"r0": -1}}, "grid"),
     ({"scenarios": [{"name": "s3", "Q0": "adapted-final:s2"}]}, "scenarios"),
     ({"scenarios": [{"name": "x", "steps": 0}]}, "scenarios"), ({"model": "machine", "x0": [1, 2]}, "simulate"),
     ([1, 2], "grid")],
)
def test_config_errors_exit_2_without_output(tmp_path, content, command):
    out = tmp_path / "never"
    code = cli.main([command, "--config", write_cfg(tmp_path, content), "--quiet", "--out", str(out)])
    assert code == 2
    assert not out.exists()


def test_missing_config_file_exit_2(tmp_path):
    assert cli.main(["grid", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_negative_grid_scale_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, {"q_scales": [-1.0]})
    assert cli.main(["grid", "--config", cfg, "--seeds", "1", "--quiet", "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    from akf.harness import NumericalFailure

    def boom(*a, **k):
        raise NumericalFailure("cekf cell (r=1, q=1), seed 42", np.linalg.LinAlgError("not PD"))

    monkeypatch.setattr(cli, "run_mse_grid", boom)
    out = tmp_path / "o"
    assert cli.main(["grid", "--seeds", "1", "--quiet", "--out", str(out)]) == 3
    assert "seed 42" in capsys.readouterr().err
    assert not out.exists()


def test_flags_override_file(tmp_path):
    cfg = write_cfg(tmp_path, {"n_seeds": 4, "master_seed": 9, "filter": "aekf"})
    out = tmp_path / "o"
    cli.main(["grid", "--config", cfg, "--seeds", "2", "--filter", "cekf", "--quiet", "--out", str(out)])
    meta, header, rows = report.read_csv(out / "table1.csv")
    assert meta["master_seed"] == "9"
    assert rows[0][header.index("n_seeds")] == "2"


def test_simulate_ramp_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "linear", "linear": {"q0": 0, "r0": 0}, "steps": 8, "x0": [0, 1]})
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", cfg, "--quiet", "--out", str(a)]) == 0
    cli.main(["simulate", "--config", cfg, "--quiet", "--out", str(b)])
    (fa,) = a.glob("*.csv")
    (fb,) = b.glob("*.csv")
    assert fa.read_bytes() == fb.read_bytes()
    _, header, rows = report.read_csv(fa)
    assert [float(r[header.index("pos")]) for r in rows] == list(range(9))


def test_simulate_machine_constant(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "machine", "disturbance": {"kind": "none"}, "steps": 50})
    out = tmp_path / "m"
    assert cli.main(["simulate", "--config", cfg, "--quiet", "--out", str(out)]) == 0
    (f,) = out.glob("*.csv")
    _, header, rows = report.read_csv(f)
    cols = np.array([[float(r[header.index(n)]) for n in report.MACHINE_STATES] for r in rows])
    np.testing.assert_allclose(cols, np.broadcast_to(cols[0], cols.shape), atol=1e-12)


def test_scenarios_outputs(tmp_path):
    out = tmp_path / "s"
    cfg = write_cfg(tmp_path, {"base": {"steps": 30}})
    assert cli.main(["scenarios", "--config", cfg, "--seeds", "3", "--quiet", "--out", str(out)]) == 0
    _, header, rows = report.read_csv(out / "table3.csv")
    assert header[:3] == ["scenario", "filter", "state"]
    assert len(rows) == 4 * 2 * 4
    assert len(list((out / "timelines" / "s4").glob("*.csv"))) == 3
    assert (out / "envelopes" / "s4.csv").exists()
    _, th, trow = report.read_csv(next((out / "timelines" / "s1").glob("*.csv")))
    assert th[:3] == ["step", "t", "truth_delta"] and "aekf_ed_p" in th and len(trow) == 30


def test_scenarios_default_mc_count_and_custom_suite(tmp_path):
    merged = {**cli.SCENARIO_DEFAULTS, "n_seeds": 2, "mc_seeds": 5}
    suite, _ = cli.build_suite(merged)
    assert [len(c.seeds) for c in suite] == [2, 2, 2, 5]
    suite, _ = cli.build_suite({**merged, "scenarios": [{"name": "only", "Q0": 1e-3}]})
    assert [c.name for c in suite] == ["only"]


def test_selftest_passes_and_lists(capsys):
    assert cli.main(["selftest", "--list"]) == 0
    listed = capsys.readouterr().out
    assert "psd_update_r" in listed and "PASS" not in listed
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 8


def test_selftest_catches_flipped_sign(monkeypatch, capsys):
    def flipped(R_prev, epsilon, Hk, P, alpha):
        eps = np.asarray(epsilon, dtype=float).ravel()
        Hk, P = np.atleast_2d(Hk), np.atleast_2d(P)
        return symmetrize(alpha * np.atleast_2d(R_prev) + (1 - alpha) * (np.outer(eps, eps) - Hk @ P @ Hk.T))

    monkeypatch.setattr(adaptive, "update_r", flipped)
    assert cli.main(["selftest"]) == 1
    assert "FAIL psd_update_r" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "akf.cli", "selftest", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "integrator_order" in proc.stdout
