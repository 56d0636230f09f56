import json

import numpy as np
import pytest
import yaml

from stochns import cli
from stochns import spectral as sp

SMALL_SIM = {"K": 4, "dt": 0.01, "horizon": 0.5, "record_every": 5}

CONFIGS = {
    "simulate": {"sim": {**SMALL_SIM, "record_modes": [[1, 0]],
                         "initial": {"kind": "random", "seed": 3}}},
    "stokes": {"sim": SMALL_SIM, "noise": {"a": 0.0}},
    "couple": {"sim": {**SMALL_SIM, "initial": {"kind": "random", "seed": 4}},
               "noise": {"kind": "multiplicative_low_mode", "M": 24},
               "coupling": {"N": [24, 0], "replicas": 8, "horizon": 2, "record_every": 10}},
    "ergodic": {"sim": {**SMALL_SIM, "horizon": 4.0},
                "ergodic": {"observables": ["energy", "mode_real(1,0)"], "windows": [1, 2, 4],
                            "replicas": 2, "second_start": {"kind": "random", "seed": 9}}},
    "activation": {"sim": {**SMALL_SIM, "horizon": 2.0},
                   "noise": {"kind": "additive_degenerate",
                             "z0": [[1, 0], [-1, 0], [1, 1], [-1, -1]]},
                   "activation": {"replicas": 2, "lam_max": 4}},
    "validate-noise": {"sim": {"K": 4}, "noise": {"kind": "multiplicative_low_mode", "M": 10},
                       "validate-noise": {"samples": 20}},
    "oracle": {"oracle": {"K": 4, "pairs": 5}},
}


def write_config(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def run(tmp_path, cmd, data, out="out", extra=()):
    cfg = write_config(tmp_path, data)
    out_dir = tmp_path / out
    code = cli.main([cmd, "--config", cfg, "--out", str(out_dir), *extra])
    return code, out_dir


def data_files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


class TestSubcommands:
    @pytest.mark.parametrize("cmd", sorted(CONFIGS))
    def test_runs_and_writes_manifest(self, tmp_path, cmd):
        code, out = run(tmp_path, cmd, CONFIGS[cmd])
        assert code == cli.EXIT_OK
        m = json.loads((out / "manifest.json").read_text())
        assert m["command"] == cmd
        assert m["normalization"] == sp.NORMALIZATION_TAG
        assert set(m["versions"]) >= {"stochns", "numpy", "scipy", "python"}
        assert len(data_files(out)) >= 1

    @pytest.mark.parametrize("cmd", sorted(CONFIGS))
    def test_byte_identical_rerun(self, tmp_path, cmd):
        _, a = run(tmp_path, cmd, CONFIGS[cmd], out="a")
        _, b = run(tmp_path, cmd, CONFIGS[cmd], out="b")
        assert data_files(a) == data_files(b)

    def test_seed_flag_changes_output(self, tmp_path):
        _, a = run(tmp_path, "simulate", CONFIGS["simulate"], out="a")
        _, b = run(tmp_path, "simulate", CONFIGS["simulate"], out="b", extra=["--seed", "99"])
        assert data_files(a) != data_files(b)
        assert json.loads((b / "manifest.json").read_text())["seed"] == 99

    def test_validate_noise_prints_constants(self, tmp_path, capsys):
        code, out = run(tmp_path, "validate-noise", CONFIGS["validate-noise"])
        assert code == cli.EXIT_OK
        C1 = sum(1 / (n + 1) ** 2 for n in range(1, 11))
        printed = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
        assert float(printed["C1"]) == pytest.approx(C1, rel=1e-15)
        assert printed["C2"] == printed["C1"]
        s = json.loads((out / "summary.json").read_text())
        assert s["A1_defect"] <= 1e-13
        assert s["A2_max_ratio"] <= s["L_G"] * (1 + 1e-12)
        assert s["A3_max_residual"] <= 1e-12

    def test_oracle(self, tmp_path, capsys):
        code, out = run(tmp_path, "oracle", CONFIGS["oracle"])
        assert code == cli.EXIT_OK
        s = json.loads((out / "summary.json").read_text())
        assert s["passed"] and s["max_relative_error"] <= 1e-12
        assert "max relative error" in capsys.readouterr().out

    def test_oracle_failed_check(self, tmp_path):
        code, out = run(tmp_path, "oracle", {"oracle": {"K": 4, "pairs": 2, "tolerance": -1.0}})
        assert code == cli.EXIT_CHECK
        assert json.loads((out / "summary.json").read_text())["passed"] is False

    def test_replicas_flag(self, tmp_path):
        code, out = run(tmp_path, "simulate", CONFIGS["simulate"], extra=["--replicas", "3"])
        assert code == cli.EXIT_OK
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert "replica" in header

    def test_snapshot_file_start(self, tmp_path):
        g = sp.make_grid(4)
        sp.write_snapshot(tmp_path / "start.csv", sp.random_field(g, np.random.default_rng(1)))
        data = {"sim": {**SMALL_SIM, "initial": {"kind": "file", "path": "start.csv"}}}
        code, _ = run(tmp_path, "simulate", data)
        assert code == cli.EXIT_OK


class TestFailures:
    @pytest.mark.parametrize("data", [
        {"sim": {"K": 4, "bogus": 1}},
        {"sim": {"K": "four"}},
        {"sim": {"K": 1}},
        {"sim": {"nu": -1.0}},
        {"noise": {"kind": "additive_degenerate"}},
        {"experiment": "oracle"},
        ["not", "a", "mapping"],
    ])
    def test_config_error_leaves_nothing(self, tmp_path, data):
        code, out = run(tmp_path, "simulate", data)
        assert code == cli.EXIT_CONFIG
        assert not out.exists()

    def test_unreadable_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("sim: [unclosed")
        assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_missing_out(self, tmp_path):
        assert cli.main(["oracle", "--config", write_config(tmp_path, {})]) == cli.EXIT_CONFIG

    def test_divergence(self, tmp_path):
        data = {"sim": {"K": 8, "nu": 0.001, "dt": 0.5, "horizon": 500.0,
                        "initial": {"kind": "random", "amplitude": 1e5, "seed": 1}}}
        with np.errstate(all="ignore"), pytest.warns(RuntimeWarning):
            code, out = run(tmp_path, "simulate", data)
        assert code == cli.EXIT_DIVERGENCE
        assert not out.exists()

    def test_statistics_refused(self, tmp_path):
        data = {**CONFIGS["couple"], "replicas": 2}
        code, out = run(tmp_path, "couple", data)
        assert code == cli.EXIT_STATISTICS
        assert not out.exists()

    def test_module_entry_point(self):
        import subprocess
        import sys
        r = subprocess.run([sys.executable, "-m", "stochns", "--version"], capture_output=True,
                           text=True)
        assert r.returncode == 0 and "stochns" in r.stdout
