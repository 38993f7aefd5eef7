import csv
import json
from pathlib import Path

import numpy as np
import pytest

from rdlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, apply_overrides, main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).parent / "golden" / "finite_speed"


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _small_solve(**initial):
    return {"params": {"m": 2.0, "p": 0.5, "sigma": 1.0, "dim": 1},
            "grid": {"kind": "line", "half_width": 3.0, "h": 0.05},
            "initial": initial or {"shape": "tent"},
            "experiment": {"mode": "cauchy", "k": 8, "t_end": 0.05, "n_snapshots": 2}}


class TestSolve:
    def test_zero_initial_gives_zero_trajectory(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve", _write(tmp_path, _small_solve(shape="zero")), "--out", str(out)])
        assert code == EXIT_OK
        for snap in sorted((out / "snapshots").glob("*.csv")):
            _, data = _read_csv(snap)
            assert np.all(data[:, 1] == 0)

    def test_invalid_p_exits_2(self, tmp_path):
        out = tmp_path / "out"
        cfg = _small_solve()
        cfg["params"]["p"] = 1.5
        assert main(["solve", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_CONFIG
        err = json.loads((out / "error.json").read_text())
        assert err["code"] and "p" in err["message"]

    def test_missing_config_exits_2(self, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", str(tmp_path / "nope.json"), "--out", str(out)]) == EXIT_CONFIG

    def test_unsupported_data_exits_2(self, tmp_path):
        cfg = _small_solve(shape="tent", radius=3.0)
        assert main(["solve", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_runtime_failure_exits_1(self, tmp_path):
        # data spreading into the Dirichlet wall is a runtime failure, not a config error
        cfg = _small_solve()
        cfg["grid"]["half_width"] = 1.3
        cfg["experiment"]["t_end"] = 2.0
        out = tmp_path / "out"
        assert main(["solve", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_RUNTIME
        assert json.loads((out / "error.json").read_text())["error"]

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RD_LAB_OUT", str(tmp_path / "env_out"))
        assert main(["solve", _write(tmp_path, _small_solve())]) == EXIT_OK
        assert (tmp_path / "env_out" / "manifest.json").exists()

    def test_set_override(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve", _write(tmp_path, _small_solve()), "--out", str(out),
                     "--set", "params.sigma=2", "--set", "experiment.t_end=0.02"])
        assert code == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["params"]["sigma"] == 2
        assert man["config"]["experiment"]["t_end"] == 0.02

    def test_override_parsing(self):
        cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=text", "d.e=[1,2]"])
        assert cfg == {"a": {"b": 2.5, "c": "text"}, "d": {"e": [1, 2]}}

    def test_manifest_has_derived_constants(self, tmp_path):
        out = tmp_path / "out"
        main(["solve", _write(tmp_path, _small_solve()), "--out", str(out)])
        man = json.loads((out / "manifest.json").read_text())
        assert "derived" in man and "config" in man

    def test_bit_identical_reruns(self, tmp_path):
        cfg = str(CONFIGS / "finite_speed.json")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", cfg, "--out", str(a)]) == EXIT_OK
        assert main(["solve", cfg, "--out", str(b)]) == EXIT_OK
        files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        assert files
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_golden_finite_speed(self, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", str(CONFIGS / "finite_speed.json"), "--out", str(out)]) == EXIT_OK
        golden = sorted(p.relative_to(GOLDEN) for p in GOLDEN.rglob("*.csv"))
        produced = sorted(p.relative_to(out) for p in out.rglob("*.csv"))
        assert golden == produced
        for rel in golden:
            hg, g = _read_csv(GOLDEN / rel)
            hp, p = _read_csv(out / rel)
            assert hg == hp
            np.testing.assert_allclose(p, g, rtol=1e-12, atol=1e-14)


class TestOtherCommands:
    def test_profile_n1(self, tmp_path):
        out = tmp_path / "out"
        assert main(["profile", str(CONFIGS / "profile_n1.json"), "--out", str(out)]) == EXIT_OK
        res = json.loads((out / "classification.json").read_text())
        assert res["classification"]["type"] in ("TypeI", "TypeII", "TypeIII")
        assert (out / "profile.csv").exists()

    def test_profile_f2_slope(self, tmp_path):
        out = tmp_path / "out"
        assert main(["profile", str(CONFIGS / "profile_f2.json"), "--out", str(out)]) == EXIT_OK
        res = json.loads((out / "classification.json").read_text())
        assert res["singular_slope"] == pytest.approx(res["expected_slope"], rel=0.01)

    def test_verify_barenblatt(self, tmp_path):
        out = tmp_path / "out"
        cfg = str(CONFIGS / "barenblatt.json")
        assert main(["verify", cfg, "--out", str(out), "--set", "experiment.t_end=1.2"]) == EXIT_OK
        res = json.loads((out / "verify.json").read_text())
        assert "abe" in res and (out / "interface_track.csv").exists()

    def test_verify_constant_field_margin(self, tmp_path):
        cfg = {"params": {"m": 2.0, "p": 0.5, "sigma": 0.0, "dim": 1},
               "grid": {"kind": "line", "half_width": 2.0, "h": 0.05},
               "initial": {"shape": "constant", "value": 1.0},
               "stepper": {"boundary": "neumann"},
               "experiment": {"reaction": False, "t_end": 0.5, "snapshot_times": [0.25, 0.5]},
               "verify": {"abe": True, "abe_options": {"t_window": [0.25, 0.5]}}}
        out = tmp_path / "out"
        assert main(["verify", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        abe = json.loads((out / "verify.json").read_text())["abe"]
        K = abe["K"]
        snaps = abe["snapshots"]
        assert len(snaps) == 2
        np.testing.assert_allclose([s["margin"] for s in snaps], [K / s["t"] for s in snaps],
                                   rtol=1e-12)

    def test_nonuniq_zero_jump(self, tmp_path):
        cfg = {"params": {"m": 2.0, "p": 0.5, "sigma": 1.0, "dim": 1},
               "grid": {"kind": "line", "half_width": 4.0, "h": 0.02},
               "initial": {"shape": "tent"},
               "nonuniq": {"schedule": {"extra_speed": 0.0, "n": 8, "t": 0.05}}}
        out = tmp_path / "out"
        assert main(["nonuniq", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        match = json.loads((out / "certificate.json").read_text())["interface_match"]
        assert match["matched"]
        assert all(j == 0 for j in match["jumps_right"])

    def test_sweep_parallel(self, tmp_path):
        out = tmp_path / "out"
        code = main(["sweep", str(CONFIGS / "sweep_sigma.json"), "--out", str(out), "--jobs", "2"])
        assert code == EXIT_OK
        summary = json.loads((out / "sweep.json").read_text())
        assert len(summary["runs"]) == 4 and all(r["ok"] for r in summary["runs"])

    def test_sweep_matches_serial(self, tmp_path):
        cfg = str(CONFIGS / "sweep_sigma.json")
        main(["sweep", cfg, "--out", str(tmp_path / "s"), "--jobs", "1"])
        main(["sweep", cfg, "--out", str(tmp_path / "p"), "--jobs", "2"])
        for p in (tmp_path / "s").rglob("*.csv"):
            assert p.read_bytes() == (tmp_path / "p" / p.relative_to(tmp_path / "s")).read_bytes()
