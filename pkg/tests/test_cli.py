import csv
import json
import math
import os

import pytest

from evfleet.cli import main

FLUID_TOML = """
[fluid]
lambda_tilde = 1000.0
n = 18956.5
m = 4538.6
A = 2287.8
d = 2
t_r = 15.14
t_b = 15.76
r = 0.25
levels = 4
"""

SIM_TOML = """
n = 60
m = 16
policy = "PoD(2)"
lambda = 1.5
horizon = 200.0
warmup = 50.0
seeds = 2
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestExitCodes:
    def test_unknown_config_key_exits_one(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.toml", SIM_TOML + "\nturbo = true\n")
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err
        assert "turbo" in err and "simulate" in err

    def test_missing_required_key_exits_one(self, tmp_path, capsys):
        cfg = write(tmp_path, "plan.toml", "alpha = 0.9\nlambda = 160.0\n")
        rc = main(["plan", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 1
        assert "gamma" in capsys.readouterr().err

    def test_missing_config_file_exits_one(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "nope.toml"),
                   "--out", str(tmp_path)])
        assert rc == 1

    def test_malformed_toml_exits_one(self, tmp_path, capsys):
        cfg = write(tmp_path, "broken.toml", "n = [unterminated\n")
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 1

    def test_unknown_subcommand_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 1

    def test_out_of_regime_fluid_exits_one(self, tmp_path, capsys):
        # structurally valid config whose parameters leave the solver's
        # domain: reported as invalid input
        bad = FLUID_TOML.replace("n = 18956.5", "n = 40000.0")
        cfg = write(tmp_path, "eq.toml", bad)
        rc = main(["equilibrium", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 1
        assert "regime" in capsys.readouterr().err


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out = tmp_path / "run1"
        assert main(["simulate", "--config", cfg, "--out", str(out),
                     "--seed", "7"]) == 0
        metrics = read_csv(out / "metrics.csv")
        assert len(metrics) == 2
        assert set(metrics[0]) == {"seed", "service_level",
                                   "avg_pickup_min", "avg_dtc_min",
                                   "workload_pct", "t_r_fulfilled_min"}
        ts = read_csv(out / "timeseries.csv")
        labels = ("idle", "pickup", "drive_customer", "drive_charger",
                  "wait_charger", "charging")
        for row in ts:
            assert sum(int(row[lab]) for lab in labels) == 60
            assert 0.0 <= float(row["mean_soc"]) <= 1.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert len(manifest["seeds"]) == 2
        assert sorted(manifest["outputs"]) == ["metrics.csv",
                                               "timeseries.csv"]

    def test_manifest_replays_byte_identically(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(out1),
                     "--seed", "7"]) == 0
        assert main(["simulate", "--config",
                     str(out1 / "manifest.json"), "--out", str(out2),
                     "--seed", "7"]) == 0
        for name in ("metrics.csv", "timeseries.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_json_format(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out = tmp_path / "j"
        assert main(["simulate", "--config", cfg, "--out", str(out),
                     "--format", "json"]) == 0
        rows = json.loads((out / "metrics.json").read_text())
        assert len(rows) == 2


class TestFluidCommands:
    def test_equilibrium_payload(self, tmp_path):
        cfg = write(tmp_path, "eq.toml", FLUID_TOML)
        out = tmp_path / "eq"
        assert main(["equilibrium", "--config", cfg,
                     "--out", str(out)]) == 0
        rep = json.loads((out / "equilibrium.json").read_text())
        assert abs(rep["residual"]) < 1e-8 * 18956.5
        assert len(rep["xc"]) == 5 and len(rep["xb"]) == 5
        assert 0.0 < rep["p0"] <= 1.0

    def test_ode_trajectory(self, tmp_path):
        cfg = write(tmp_path, "ode.toml",
                    "t_end = 20.0\nstart_seed = 3\n" + FLUID_TOML)
        out = tmp_path / "ode"
        assert main(["ode", "--config", cfg, "--out", str(out)]) == 0
        rows = read_csv(out / "trajectory.csv")
        assert float(rows[0]["time_min"]) == 0.0
        assert "xc_4" in rows[0] and "xb_0" in rows[0]
        summary = json.loads((out / "ode_summary.json").read_text())
        assert summary["steps"] > 0

    def test_fluid_missing_key_exits_one(self, tmp_path, capsys):
        cfg = write(tmp_path, "eq.toml",
                    FLUID_TOML.replace("levels = 4\n", ""))
        rc = main(["equilibrium", "--config", cfg, "--out",
                   str(tmp_path)])
        assert rc == 1
        assert "levels" in capsys.readouterr().err


class TestBoundsCommand:
    def test_constant_rate_to_stdout(self, tmp_path, capsys):
        out = tmp_path / "b"
        assert main(["bounds", "--out", str(out), "--alpha", "0.9",
                     "--lambda", "160", "--gamma", "0.4"]) == 0
        text = capsys.readouterr().out
        rows = list(csv.DictReader(text.splitlines()))
        assert len(rows) == 1
        assert float(rows[0]["n_lb"]) == pytest.approx(2725.2)
        assert float(rows[0]["m_lb"]) == pytest.approx(545.04)
        assert float(rows[0]["fleet_buffer_exponent"]) == \
            pytest.approx(0.6)
        assert (out / "bounds.csv").exists()

    def test_varying_rate_grid(self, tmp_path, capsys):
        cfg = write(tmp_path, "var.toml",
                    'alpha = [0.6]\nc = [3.0]\nt2_over_t1 = [1.0]\n'
                    'lambda = 2.0\nt1 = 120.0\n')
        out = tmp_path / "v"
        assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
        rows = list(csv.DictReader(
            capsys.readouterr().out.splitlines()))
        assert rows[0]["case"] == "II"
        assert float(rows[0]["alpha_star"]) == pytest.approx(2.0 / 3.0)


class TestPlanCommand:
    def test_plan_payload(self, tmp_path):
        cfg = write(tmp_path, "plan.toml",
                    "alpha = 0.9\nlambda = 160.0\ngamma = 0.4\n"
                    "kappa3 = 0.0\n")
        out = tmp_path / "p"
        assert main(["plan", "--config", cfg, "--out", str(out)]) == 0
        plan = json.loads((out / "plan.json").read_text())
        assert plan["lambda_tilde"] == pytest.approx(144.0)
        assert plan["A"] == plan["m"] - math.ceil(144.0 ** 0.8)
        assert plan["d"] >= 2


class TestOutputDirDefaults:
    def test_env_var_fallback(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("EVFLEET_OUT", str(tmp_path / "envout"))
        assert main(["bounds", "--alpha", "0.5", "--lambda", "10"]) == 0
        assert (tmp_path / "envout" / "bounds.csv").exists()
