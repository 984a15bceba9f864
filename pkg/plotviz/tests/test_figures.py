import csv

import numpy as np
import pytest

from plotviz import SchemaError, render
from plotviz.figures import ACTIVITY_COLUMNS, stack_arrays
from plotviz.io import load_table, match_tables


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return str(path)


@pytest.fixture
def scaling_csv(tmp_path):
    rows = []
    for beta, expo in ((1.0, 0.531), (0.803, 0.577)):
        for lam in (5.0, 20.0, 80.0, 320.0):
            rows.append({
                "beta": beta, "lambda": lam, "m": int(8 * lam),
                "n_at_90": 17.0 * lam + 3.0 * lam ** expo,
                "fleet_buffer": 3.0 * lam ** expo,
                "charger_buffer": 5.0 * lam ** (2 * (1 - expo)),
                "pickup_mean_min": 4.0 * lam ** -0.47,
                "dtc_mean_min": 6.0 * lam ** (-beta / 2)})
    return write_csv(tmp_path / "scaling_results.csv", rows)


@pytest.fixture
def exponents_csv(tmp_path):
    rows = [{"series": f"beta={beta}", "beta": beta,
             "fitted_beta": beta + 0.004,
             "fitted_1_minus_gamma": expo,
             "theoretical_1_minus_gamma": theo, "error_pct": 2.0,
             "fitted_pickup_slope": -0.47,
             "theoretical_pickup_slope": -0.492,
             "pickup_error_pct": 4.0,
             "fitted_dtc_slope": -beta / 2 + 0.01,
             "theoretical_dtc_slope": -beta / 2, "dtc_error_pct": 2.0}
            for beta, expo, theo in ((1.0, 0.531, 0.508),
                                     (0.803, 0.577, 0.599))]
    return write_csv(tmp_path / "exponents.csv", rows)


@pytest.fixture
def pod_csv(tmp_path):
    rows = [{"pack_kwh": pack, "d": d,
             "service_level": 0.8 + 0.02 * d - 0.001 * d * d / pack,
             "service_se": 0.004}
            for pack in (5.0, 10.0, 20.0) for d in range(1, 8)]
    return write_csv(tmp_path / "pod_sweep.csv", rows)


@pytest.fixture
def compare_csv(tmp_path):
    rows = [{"series": name, "policy": policy, "lambda": lam,
             "n": int(18 * lam), "m": int(8 * lam),
             "service_level": base + off, "service_se": 0.005,
             "pickup_mean_min": 2.0, "dtc_mean_min": 1.0,
             "workload_pct": 84.0 + off}
            for name in ("A", "C")
            for policy, off in (("CD", 0.0), ("CAD", 0.03),
                                ("PoD(2)", 0.05))
            for lam, base in ((5.0, 0.85), (20.0, 0.87), (80.0, 0.88))]
    return write_csv(tmp_path / "policy_compare.csv", rows)


@pytest.fixture
def timeseries_csv(tmp_path):
    # two seeds, 240 vehicles split across activities, counts conserved
    rng = np.random.default_rng(3)
    rows = []
    n = 240
    for seed in (11, 12):
        for t in range(0, 100, 5):
            parts = rng.multinomial(n, [0.3, 0.1, 0.35, 0.05, 0.05, 0.15])
            row = {"seed": seed, "time_min": float(t)}
            row.update(dict(zip(ACTIVITY_COLUMNS, parts.tolist())))
            row["mean_soc"] = 0.5 + 0.3 * np.sin(t / 30.0)
            rows.append(row)
    return write_csv(tmp_path / "timeseries.csv", rows)


@pytest.fixture
def bounds_csv(tmp_path):
    rows = [{"alpha": 0.9, "c": c, "t2_over_t1": ratio, "r": 0.25,
             "case": "II", "c_alpha": 0.1,
             "alpha_star": (1 + ratio) / ((1 + c * ratio)
                                          * (1 - 0.25 * ratio)),
             "n_lb": 2000.0, "m_lb": 500.0}
            for c in (2.0, 3.0, 5.0)
            for ratio in (0.25, 0.5, 1.0, 2.0)]
    return write_csv(tmp_path / "bounds.csv", rows)


class TestRenderEachFigure:
    def test_scaling(self, scaling_csv, exponents_csv, tmp_path):
        out = tmp_path / "scaling.png"
        info = render("scaling", [scaling_csv, exponents_csv], str(out))
        assert out.stat().st_size > 0
        # annotated slopes are the table values to 3 decimals
        assert info["annotations"] == ["slope 0.577", "slope 0.531"]

    def test_fleet90(self, scaling_csv, exponents_csv, tmp_path):
        out = tmp_path / "fleet90.png"
        info = render("fleet90", [exponents_csv, scaling_csv], str(out))
        assert out.stat().st_size > 0
        assert "slope 0.531" in info["annotations"]

    def test_pod(self, pod_csv, tmp_path):
        out = tmp_path / "pod.png"
        info = render("pod", [pod_csv], str(out))
        assert out.stat().st_size > 0
        assert info["packs"] == [5.0, 10.0, 20.0]
        assert info["d_values"] == list(range(1, 8))

    def test_stackplot(self, timeseries_csv, tmp_path):
        out = tmp_path / "stack.png"
        info = render("stackplot", [timeseries_csv], str(out))
        assert out.stat().st_size > 0
        # vehicles are conserved: stacked heights sum to the fleet size
        # at every timestamp
        assert np.all(info["stack_totals"] == 240)

    def test_compare(self, compare_csv, tmp_path):
        out = tmp_path / "compare.png"
        info = render("compare", [compare_csv], str(out))
        assert out.stat().st_size > 0
        assert info["series"] == ["A", "C"]

    def test_contour(self, pod_csv, tmp_path):
        out = tmp_path / "contour.png"
        info = render("contour", [pod_csv], str(out))
        assert out.stat().st_size > 0
        assert info["grid"].shape == (3, 7)

    def test_applicability(self, bounds_csv, tmp_path):
        out = tmp_path / "appl.png"
        info = render("applicability", [bounds_csv], str(out))
        assert out.stat().st_size > 0
        assert info["c_values"] == [2.0, 3.0, 5.0]


class TestSchemaFailures:
    def test_empty_table_names_the_file(self, tmp_path):
        path = tmp_path / "timeseries.csv"
        path.write_text("seed,time_min\n")
        with pytest.raises(SchemaError, match="timeseries.csv"):
            render("stackplot", [str(path)], str(tmp_path / "x.png"))

    def test_missing_column_is_named(self, pod_csv, tmp_path):
        rows = load_table(pod_csv)
        for row in rows:
            del row["service_se"]
        bad = write_csv(tmp_path / "bad.csv", rows)
        with pytest.raises(SchemaError, match="service_se"):
            render("pod", [bad], str(tmp_path / "x.png"))

    def test_unknown_figure(self, pod_csv, tmp_path):
        with pytest.raises(SchemaError, match="unknown figure"):
            render("sankey", [pod_csv], str(tmp_path / "x.png"))

    def test_unused_input_rejected(self, pod_csv, bounds_csv, tmp_path):
        with pytest.raises(SchemaError, match="unused"):
            render("pod", [pod_csv, bounds_csv], str(tmp_path / "x.png"))

    def test_ambiguous_inputs_rejected(self, pod_csv, tmp_path):
        twin = write_csv(tmp_path / "twin.csv", load_table(pod_csv))
        with pytest.raises(SchemaError, match="multiple"):
            render("pod", [pod_csv, twin], str(tmp_path / "x.png"))

    def test_incomplete_contour_grid(self, pod_csv, tmp_path):
        rows = load_table(pod_csv)
        holed = write_csv(tmp_path / "holed.csv", rows[1:])
        with pytest.raises(SchemaError, match="grid"):
            render("contour", [holed], str(tmp_path / "x.png"))

    def test_exponent_row_must_cover_series(self, scaling_csv,
                                            exponents_csv, tmp_path):
        rows = [r for r in load_table(exponents_csv)
                if r["beta"] == "1.0"]
        partial = write_csv(tmp_path / "partial.csv", rows)
        with pytest.raises(SchemaError, match="beta=0.803"):
            render("scaling", [scaling_csv, partial],
                   str(tmp_path / "x.png"))


class TestTableMatching:
    def test_order_independent(self, scaling_csv, exponents_csv):
        a = match_tables([scaling_csv, exponents_csv],
                         {"scaling": ("n_at_90",),
                          "exponents": ("fitted_1_minus_gamma",)})
        b = match_tables([exponents_csv, scaling_csv],
                         {"scaling": ("n_at_90",),
                          "exponents": ("fitted_1_minus_gamma",)})
        assert a["scaling"] == b["scaling"]

    def test_stack_arrays_uses_one_seed(self, timeseries_csv):
        times, counts = stack_arrays(load_table(timeseries_csv))
        assert times.size == 20
        assert counts.shape == (6, 20)
