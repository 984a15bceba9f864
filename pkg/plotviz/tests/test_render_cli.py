"""End-to-end checks of the `plotviz render` command, including one pass
over tables produced by the actual experiment CLI rather than synthetic
fixtures."""

import csv
import subprocess
import sys

import pytest

from plotviz.cli import main


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return str(path)


@pytest.fixture
def pod_csv(tmp_path):
    rows = [{"pack_kwh": pack, "d": d, "service_level": 0.8 + 0.01 * d,
             "service_se": 0.004}
            for pack in (5.0, 10.0) for d in (1, 2, 3)]
    return write_csv(tmp_path / "pod_sweep.csv", rows)


def test_render_exits_zero_and_prints_path(pod_csv, tmp_path, capsys):
    out = tmp_path / "pod.png"
    code = main(["render", "--figure", "pod", "--in", pod_csv,
                 "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.strip() == str(out)
    assert out.stat().st_size > 0


def test_schema_error_exits_one(tmp_path, capsys):
    empty = tmp_path / "pod.csv"
    empty.write_text("pack_kwh,d,service_level,service_se\n")
    code = main(["render", "--figure", "pod", "--in", str(empty),
                 "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "pod.csv" in capsys.readouterr().err

def test_missing_file_exits_one(tmp_path, capsys):
    code = main(["render", "--figure", "pod",
                 "--in", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x.png")])
    assert code == 1


def test_unknown_figure_rejected_by_parser(pod_csv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["render", "--figure", "sankey", "--in", pod_csv,
              "--out", str(tmp_path / "x.png")])
    assert exc.value.code == 2


def run_evfleet(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "evfleet.cli", *args],
        cwd=cwd, capture_output=True, text=True)


class TestAgainstHarnessOutputs:
    def test_stackplot_from_simulated_timeseries(self, tmp_path):
        cfg = tmp_path / "sim.toml"
        cfg.write_text('n = 60\nm = 16\npolicy = "PoD(2)"\n'
                       "lambda = 1.5\nhorizon = 200.0\nwarmup = 100.0\n")
        res = run_evfleet(["simulate", "--config", str(cfg),
                           "--out", str(tmp_path), "--seed", "7"],
                          cwd=tmp_path)
        assert res.returncode == 0, res.stderr
        out = tmp_path / "stack.png"
        code = main(["render", "--figure", "stackplot",
                     "--in", str(tmp_path / "timeseries.csv"),
                     "--out", str(out)])
        assert code == 0
        assert out.stat().st_size > 0

    def test_applicability_from_bounds_grid(self, tmp_path):
        cfg = tmp_path / "bounds.toml"
        cfg.write_text("alpha = 0.9\nc = [2.0, 3.0]\n"
                       "t2_over_t1 = [0.25, 0.5, 1.0]\nlambda = 10.0\n")
        res = run_evfleet(["bounds", "--config", str(cfg),
                           "--out", str(tmp_path)], cwd=tmp_path)
        assert res.returncode == 0, res.stderr
        out = tmp_path / "appl.png"
        code = main(["render", "--figure", "applicability",
                     "--in", str(tmp_path / "bounds.csv"),
                     "--out", str(out)])
        assert code == 0
        assert out.stat().st_size > 0
