"""The seven figure builders.

Each builder takes the tables it declared in `FIGURES` and an output
path, draws with matplotlib, and returns a payload describing what it
rendered (annotated slopes, stacked totals) so the tests can check the
figure against the tables without parsing pixels. Nothing here fits or
solves anything: fitted exponents come in through the exponent table.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, match_tables

ACTIVITY_COLUMNS = ("idle", "pickup", "drive_customer", "drive_charger",
                    "wait_charger", "charging")

SCALING_COLUMNS = ("beta", "lambda", "m", "n_at_90", "fleet_buffer",
                   "charger_buffer", "pickup_mean_min", "dtc_mean_min")
EXPONENT_COLUMNS = ("series", "beta", "fitted_1_minus_gamma",
                    "theoretical_1_minus_gamma", "fitted_dtc_slope")
POD_COLUMNS = ("pack_kwh", "d", "service_level", "service_se")
COMPARE_COLUMNS = ("series", "policy", "lambda", "service_level",
                   "service_se", "pickup_mean_min", "workload_pct")
TIMESERIES_COLUMNS = ("seed", "time_min", *ACTIVITY_COLUMNS, "mean_soc")
APPLICABILITY_COLUMNS = ("alpha", "c", "t2_over_t1", "case", "alpha_star")


def _group(rows: list[dict], key: str) -> dict[float, list[dict]]:
    out: dict[float, list[dict]] = {}
    for row in rows:
        out.setdefault(float(row[key]), []).append(row)
    return out


def _slope_by_beta(exponent_rows: list[dict], column: str
                   ) -> dict[float, float]:
    return {float(row["beta"]): float(row[column])
            for row in exponent_rows}


def _guide_line(ax, xs: np.ndarray, ys: np.ndarray, slope: float,
                label: str) -> None:
    # anchor the published slope at the first point; display only
    ref = ys[0] * (xs / xs[0]) ** slope
    ax.plot(xs, ref, "--", color="gray", lw=1)
    ax.annotate(label, (xs[-1], ref[-1]), textcoords="offset points",
                xytext=(4, 0), fontsize=8)


def fig_scaling(tables: dict, out: str) -> dict:
    """Log-log fleet buffer against arrival rate per series, with the
    fitted exponent from the exponent table drawn as a guide line."""
    slopes = _slope_by_beta(tables["exponents"], "fitted_1_minus_gamma")
    fig, ax = plt.subplots(figsize=(5, 4))
    annotations = []
    for beta, rows in sorted(_group(tables["scaling"], "beta").items()):
        rows.sort(key=lambda r: float(r["lambda"]))
        xs = np.array([float(r["lambda"]) for r in rows])
        ys = np.array([float(r["fleet_buffer"]) for r in rows])
        ax.plot(xs, ys, "o-", label=f"beta={beta:g}")
        if beta not in slopes:
            raise SchemaError(f"no exponent row for beta={beta:g}")
        label = f"slope {slopes[beta]:.3f}"
        annotations.append(label)
        _guide_line(ax, xs, ys, slopes[beta], label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("arrival rate (per min)")
    ax.set_ylabel("fleet buffer (vehicles)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "annotations": annotations}


def fig_fleet90(tables: dict, out: str) -> dict:
    """Fleet size at the target service level against arrival rate, with
    the first-order total and the buffer on a log-log companion panel."""
    slopes = _slope_by_beta(tables["exponents"], "fitted_1_minus_gamma")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    annotations = []
    for beta, rows in sorted(_group(tables["scaling"], "beta").items()):
        rows.sort(key=lambda r: float(r["lambda"]))
        xs = np.array([float(r["lambda"]) for r in rows])
        n90 = np.array([float(r["n_at_90"]) for r in rows])
        buf = np.array([float(r["fleet_buffer"]) for r in rows])
        ax1.plot(xs, n90, "o-", label=f"beta={beta:g}")
        ax2.plot(xs, buf, "o-", label=f"beta={beta:g}")
        if beta not in slopes:
            raise SchemaError(f"no exponent row for beta={beta:g}")
        label = f"slope {slopes[beta]:.3f}"
        annotations.append(label)
        _guide_line(ax2, xs, buf, slopes[beta], label)
    for ax, ylab in ((ax1, "fleet at target service"),
                     (ax2, "fleet buffer")):
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("arrival rate (per min)")
        ax.set_ylabel(ylab)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "annotations": annotations}


def fig_pod(tables: dict, out: str) -> dict:
    """Service level per dispatch pool size, one bar group per pack."""
    by_pack = _group(tables["pod"], "pack_kwh")
    packs = sorted(by_pack)
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / len(packs)
    d_values = sorted({int(r["d"]) for r in tables["pod"]})
    for i, pack in enumerate(packs):
        rows = {int(r["d"]): r for r in by_pack[pack]}
        xs = np.arange(len(d_values)) + (i - (len(packs) - 1) / 2) * width
        ys = [float(rows[d]["service_level"]) for d in d_values]
        es = [float(rows[d]["service_se"]) for d in d_values]
        ax.bar(xs, ys, width=width, yerr=es, label=f"{pack:g} kWh")
    ax.set_xticks(np.arange(len(d_values)), [str(d) for d in d_values])
    ax.set_xlabel("dispatch pool size d")
    ax.set_ylabel("service level")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "packs": packs, "d_values": d_values}


def stack_arrays(ts_rows: list[dict]) -> tuple[np.ndarray, np.ndarray]:
    """(times, activity counts) for the first seed in a timeseries table;
    counts are stacked row-wise in ACTIVITY_COLUMNS order."""
    first = ts_rows[0]["seed"]
    rows = [r for r in ts_rows if r["seed"] == first]
    times = np.array([float(r["time_min"]) for r in rows])
    counts = np.array([[float(r[c]) for r in rows]
                       for c in ACTIVITY_COLUMNS])
    return times, counts


def fig_stackplot(tables: dict, out: str) -> dict:
    """Stacked activity counts over time with the mean state of charge
    overlaid on a second axis. Stacked heights sum to the fleet size at
    every timestamp (vehicles are always in exactly one activity)."""
    times, counts = stack_arrays(tables["timeseries"])
    first = tables["timeseries"][0]["seed"]
    soc = np.array([float(r["mean_soc"]) for r in tables["timeseries"]
                    if r["seed"] == first])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.stackplot(times, counts, labels=ACTIVITY_COLUMNS, alpha=0.8)
    ax.set_xlabel("time (min)")
    ax.set_ylabel("vehicles")
    ax.legend(fontsize=7, loc="upper left")
    ax2 = ax.twinx()
    ax2.plot(times, soc, "k-", lw=1.2, label="mean SoC")
    ax2.set_ylabel("mean state of charge")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    totals = counts.sum(axis=0)
    return {"path": out, "times": times, "stack_totals": totals}


def fig_compare(tables: dict, out: str) -> dict:
    """Service level against arrival rate per policy, one panel per
    charger-scaling series."""
    by_series: dict[str, list[dict]] = {}
    for row in tables["compare"]:
        by_series.setdefault(row["series"], []).append(row)
    names = sorted(by_series)
    fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 4),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        for policy in sorted({r["policy"] for r in by_series[name]}):
            rows = [r for r in by_series[name] if r["policy"] == policy]
            rows.sort(key=lambda r: float(r["lambda"]))
            xs = [float(r["lambda"]) for r in rows]
            ys = [float(r["service_level"]) for r in rows]
            es = [float(r["service_se"]) for r in rows]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2,
                        label=policy)
        ax.set_xscale("log")
        ax.set_title(f"series {name}", fontsize=9)
        ax.set_xlabel("arrival rate (per min)")
        ax.set_ylabel("service level")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "series": names}


def fig_contour(tables: dict, out: str) -> dict:
    """Service-level contours over the (pool size, pack size) sweep."""
    rows = tables["pod"]
    d_values = sorted({int(r["d"]) for r in rows})
    packs = sorted({float(r["pack_kwh"]) for r in rows})
    grid = np.full((len(packs), len(d_values)), np.nan)
    for row in rows:
        i = packs.index(float(row["pack_kwh"]))
        j = d_values.index(int(row["d"]))
        grid[i, j] = float(row["service_level"])
    if np.isnan(grid).any():
        raise SchemaError("pod table does not cover the full "
                          "(d, pack_kwh) grid")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    cs = ax.contourf(d_values, packs, grid, levels=12, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="service level")
    ax.set_xlabel("dispatch pool size d")
    ax.set_ylabel("pack size (kWh)")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "grid": grid}


def fig_applicability(tables: dict, out: str) -> dict:
    """Largest service target with buffer-style scaling, as a function of
    the peak-to-valley length ratio, one curve per peak multiplier."""
    by_c = _group(tables["bounds"], "c")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for c, rows in sorted(by_c.items()):
        rows.sort(key=lambda r: float(r["t2_over_t1"]))
        xs = np.array([float(r["t2_over_t1"]) for r in rows])
        ys = np.array([float(r["alpha_star"]) for r in rows])
        ax.plot(xs, ys, "o-", label=f"c={c:g}")
        ax.fill_between(xs, 0.0, ys, alpha=0.1)
    ax.set_xlabel("peak / valley length ratio")
    ax.set_ylabel("largest applicable service target")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return {"path": out, "c_values": sorted(by_c)}


FIGURES = {
    "scaling": (fig_scaling, {"scaling": SCALING_COLUMNS,
                              "exponents": EXPONENT_COLUMNS}),
    "fleet90": (fig_fleet90, {"scaling": SCALING_COLUMNS,
                              "exponents": EXPONENT_COLUMNS}),
    "pod": (fig_pod, {"pod": POD_COLUMNS}),
    "stackplot": (fig_stackplot, {"timeseries": TIMESERIES_COLUMNS}),
    "compare": (fig_compare, {"compare": COMPARE_COLUMNS}),
    "contour": (fig_contour, {"pod": POD_COLUMNS}),
    "applicability": (fig_applicability,
                      {"bounds": APPLICABILITY_COLUMNS}),
}


def render(figure: str, paths: list[str], out: str) -> dict:
    """Draw one figure from its input tables and write it to `out`."""
    if figure not in FIGURES:
        raise SchemaError(f"unknown figure {figure!r}; expected one of "
                          f"{sorted(FIGURES)}")
    builder, wanted = FIGURES[figure]
    tables = match_tables(paths, wanted)
    return builder(tables, out)
