"""Command-line entry point.

One executable, `evfleet`, with a subcommand per capability: single
simulations, fluid-model integration and equilibria, analytic bounds,
capacity planning, and the reproduction experiments. Inputs come from a
TOML config (unknown keys rejected) plus a few override flags; outputs are
CSV or JSON files written atomically, and every run leaves a
manifest.json with the fully resolved configuration and seed list so it
can be reproduced byte-for-byte by pointing --config at the manifest.

Exit codes: 0 success, 1 invalid input or config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                     # Python < 3.11
    import tomli as tomllib

from . import bounds as bounds_mod
from . import experiments as exp
from . import fluid
from .engine_py import split_seed
from .model import SystemParams, capacity_plan
from .simulator import engine_name, run

SUBCOMMANDS = ("simulate", "ode", "equilibrium", "bounds", "plan",
               "scaling", "compare", "pod-sweep", "calibrate-tr")

PARAM_KEYS = {"charge_rate", "discharge_rate", "pack_size", "avg_speed",
              "region_side", "trip_time", "tau1", "tau2", "s_min",
              "s_max", "posts_per_charger"}

CONFIG_KEYS = {
    "simulate": {"params", "n", "m", "policy", "lambda", "d", "horizon",
                 "warmup", "seeds", "master_seed", "engine"},
    "ode": {"fluid", "t_end", "dt", "record_every", "start",
            "start_seed", "start_total"},
    "equilibrium": {"fluid", "gamma", "kappa1", "kappa4"},
    "bounds": {"alpha", "lambda", "gamma", "trip_time", "r", "c",
               "t2_over_t1", "c_alpha", "t1", "t2"},
    "plan": {"params", "alpha", "lambda", "gamma", "kappa1", "kappa2",
             "kappa3"},
    "scaling": {"params", "beta", "lambda_grid", "policy", "alpha",
                "c_coef", "t_r_tilde", "seeds", "master_seed", "horizon",
                "warmup"},
    "compare": {"params", "series", "lambda_grid", "policies", "seeds",
                "master_seed", "horizon", "warmup"},
    "pod-sweep": {"params", "d_values", "pack_sizes", "lambda", "n", "m",
                  "seeds", "master_seed", "horizon", "warmup"},
    "calibrate-tr": {"params", "lambda", "n", "m", "policy", "seeds",
                     "master_seed", "horizon", "warmup"},
}

FLUID_KEYS = {"lambda_tilde", "n", "m", "A", "d", "t_r", "t_b", "r",
              "tau1", "tau2", "levels"}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    """Read a TOML config or a previously written manifest.json."""
    if path.endswith(".json"):
        with open(path, "rb") as fh:
            data = json.load(fh)
        if "config" in data and "subcommand" in data:
            return data["config"]
        return data
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def check_keys(cfg: dict, subcommand: str) -> None:
    allowed = CONFIG_KEYS[subcommand]
    for key in cfg:
        if key not in allowed:
            raise ConfigError(
                f"unknown config key {key!r} for {subcommand!r} "
                f"(allowed: {', '.join(sorted(allowed))})")
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("[params] must be a table")
    for key in params:
        if key not in PARAM_KEYS:
            raise ConfigError(f"unknown [params] key {key!r}")
    flu = cfg.get("fluid", {})
    if not isinstance(flu, dict):
        raise ConfigError("[fluid] must be a table")
    for key in flu:
        if key not in FLUID_KEYS:
            raise ConfigError(f"unknown [fluid] key {key!r}")


def atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def write_rows(out_dir: str, name: str, rows: list[dict],
               fmt: str) -> str:
    if fmt == "json":
        path = os.path.join(out_dir, f"{name}.json")
        atomic_write(path, _json_text(rows))
    else:
        path = os.path.join(out_dir, f"{name}.csv")
        atomic_write(path, _csv_text(rows))
    return path


def write_manifest(out_dir: str, subcommand: str, cfg: dict,
                   seeds: list[int], outputs: list[str],
                   fmt: str) -> str:
    path = os.path.join(out_dir, "manifest.json")
    atomic_write(path, _json_text({
        "subcommand": subcommand,
        "config": cfg,
        "seeds": seeds,
        "format": fmt,
        "engine": engine_name(),
        "outputs": [os.path.basename(p) for p in outputs],
    }))
    return path


def _params_from(cfg: dict) -> SystemParams:
    return SystemParams(**cfg.get("params", {}))


def _fluid_params(cfg: dict) -> fluid.FluidParams:
    flu = dict(cfg.get("fluid", {}))
    missing = FLUID_KEYS - set(flu) - {"tau1", "tau2"}
    if missing:
        raise ConfigError(
            f"[fluid] missing keys: {', '.join(sorted(missing))}")
    flu.setdefault("tau1", 1.0)
    flu.setdefault("tau2", 1.0)
    flu["d"] = int(flu["d"])
    flu["levels"] = int(flu["levels"])
    return fluid.FluidParams(**flu)


def _seed_count(cfg: dict, default: int = 5) -> int:
    seeds = int(cfg.get("seeds", default))
    if seeds < 1:
        raise ConfigError("seeds must be >= 1")
    return seeds


# -- subcommand bodies ----------------------------------------------------

def cmd_simulate(cfg: dict, out_dir: str, master: int, jobs: int,
                 fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    for key in ("n", "m", "policy", "lambda"):
        if key not in cfg:
            raise ConfigError(f"simulate config needs {key!r}")
    count = _seed_count(cfg, default=1)
    seeds = [split_seed(master, i) for i in range(count)]
    kwargs = {}
    if "horizon" in cfg:
        kwargs["horizon"] = float(cfg["horizon"])
    if "warmup" in cfg:
        kwargs["warmup"] = float(cfg["warmup"])
    if "d" in cfg:
        kwargs["d"] = int(cfg["d"])
    if "engine" in cfg:
        kwargs["engine"] = cfg["engine"]
    metrics_rows, ts_rows = [], []
    for seed in seeds:
        res = run(params, int(cfg["n"]), int(cfg["m"]), cfg["policy"],
                  float(cfg["lambda"]), seed=seed, **kwargs)
        metrics_rows.append(res.metrics_row())
        labels = ("idle", "pickup", "drive_customer", "drive_charger",
                  "wait_charger", "charging")
        for k in range(res.ts_time.size):
            row = {"seed": seed, "time_min": float(res.ts_time[k])}
            row.update({lab: int(res.ts_counts[k, j])
                        for j, lab in enumerate(labels)})
            row["mean_soc"] = float(res.ts_mean_soc[k])
            ts_rows.append(row)
    outputs = [write_rows(out_dir, "metrics", metrics_rows, fmt),
               write_rows(out_dir, "timeseries", ts_rows, fmt)]
    return seeds, outputs


def cmd_ode(cfg: dict, out_dir: str, master: int, jobs: int,
            fmt: str) -> tuple[list[int], list[str]]:
    fp = _fluid_params(cfg)
    t_end = float(cfg.get("t_end", 100.0 * fp.t_r))
    dt = float(cfg["dt"]) if "dt" in cfg else None
    record_every = int(cfg.get("record_every", 10))
    if "start" in cfg:
        start = cfg["start"]
        state = fluid.FluidState(
            xc=np.asarray(start["xc"], dtype=float),
            xb=np.asarray(start["xb"], dtype=float))
    else:
        rep = fluid.equilibrium(fp)
        total = float(cfg.get("start_total", rep.total))
        state = fluid.random_state(fp, total,
                                   seed=int(cfg.get("start_seed", master)))
    res = fluid.integrate(state, fp, t_end, dt=dt,
                          record_every=record_every,
                          converge_tol=1e-9 * fp.n)
    rows = []
    for i, t in enumerate(res.times):
        row = {"time_min": float(t)}
        st = res.states[i]
        row.update({f"xc_{j}": float(st.xc[j])
                    for j in range(fp.levels + 1)})
        row.update({f"xb_{j}": float(st.xb[j])
                    for j in range(fp.levels + 1)})
        rows.append(row)
    outputs = [write_rows(out_dir, "trajectory", rows, fmt)]
    atomic_write(os.path.join(out_dir, "ode_summary.json"), _json_text(
        {"converged": bool(res.converged), "steps": int(res.steps)}))
    outputs.append(os.path.join(out_dir, "ode_summary.json"))
    return [], outputs


def cmd_equilibrium(cfg: dict, out_dir: str, master: int, jobs: int,
                    fmt: str) -> tuple[list[int], list[str]]:
    fp = _fluid_params(cfg)
    rep = fluid.equilibrium(
        fp, gamma=cfg.get("gamma"), kappa1=cfg.get("kappa1"),
        kappa4=cfg.get("kappa4"))
    payload = {
        "xc": [float(v) for v in rep.xc],
        "xb": [float(v) for v in rep.xb],
        "p0": rep.p0, "mu": rep.mu, "residual": rep.residual,
        "total": rep.total,
        "xc_top_bound": rep.xc_top_bound, "xc_top_ok": rep.xc_top_ok,
        "xb_top_bound": rep.xb_top_bound, "xb_top_ok": rep.xb_top_ok,
        "service_rate_lb": rep.service_rate_lb,
    }
    path = os.path.join(out_dir, "equilibrium.json")
    atomic_write(path, _json_text(payload))
    return [], [path]


def cmd_bounds(cfg: dict, out_dir: str, master: int, jobs: int,
               fmt: str) -> tuple[list[int], list[str]]:
    t_r = float(cfg.get("trip_time", 15.14))
    r = float(cfg.get("r", 0.25))
    alphas = cfg.get("alpha", [0.9])
    if not isinstance(alphas, list):
        alphas = [alphas]
    rows = []
    if "c" in cfg:                       # varying-rate grid
        cs = cfg["c"] if isinstance(cfg["c"], list) else [cfg["c"]]
        ratios = cfg.get("t2_over_t1", [1.0])
        if not isinstance(ratios, list):
            ratios = [ratios]
        lam = float(cfg.get("lambda", 1.0))
        t1 = float(cfg.get("t1", 100.0))
        for alpha in alphas:
            for c in cs:
                for ratio in ratios:
                    prof = bounds_mod.DemandProfile(
                        base_rate=lam, peak_multiplier=float(c),
                        valley_length=t1, peak_length=t1 * float(ratio))
                    case = bounds_mod.varying_case(float(alpha), prof, r)
                    c_alpha = cfg.get("c_alpha")
                    if case != "I" and c_alpha is None:
                        c_alpha = bounds_mod.c_alpha_interval(
                            float(alpha), prof, r, t_r)[1]
                    res = bounds_mod.varying_bounds(
                        float(alpha), prof, r, t_r,
                        None if case == "I" else float(c_alpha))
                    rows.append({
                        "alpha": alpha, "c": c, "t2_over_t1": ratio,
                        "r": r, "case": res.case_id,
                        "c_alpha": res.c_alpha,
                        "alpha_star": bounds_mod.phase_boundary(
                            float(c), r, float(ratio)),
                        "n_lb": res.n_lb, "m_lb": res.m_lb})
    else:                                # constant-rate grid
        lams = cfg.get("lambda", [160.0])
        if not isinstance(lams, list):
            lams = [lams]
        gammas = cfg.get("gamma", [1.0 / 3.0])
        if not isinstance(gammas, list):
            gammas = [gammas]
        for alpha in alphas:
            for lam in lams:
                n_lb, m_lb = bounds_mod.first_order_bounds(
                    float(alpha), float(lam), t_r, r)
                for gamma in gammas:
                    (n1, e_n), (m1, e_m) = bounds_mod.universal_scaling(
                        float(alpha), float(lam), float(gamma), t_r, r)
                    rows.append({
                        "alpha": alpha, "lambda": lam, "gamma": gamma,
                        "r": r, "n_lb": n_lb, "m_lb": m_lb,
                        "fleet_buffer_exponent": e_n,
                        "charger_buffer_exponent": e_m})
    text = _csv_text(rows)
    sys.stdout.write(text)
    outputs = [write_rows(out_dir, "bounds", rows, fmt)]
    return [], outputs


def cmd_plan(cfg: dict, out_dir: str, master: int, jobs: int,
             fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    for key in ("alpha", "lambda", "gamma"):
        if key not in cfg:
            raise ConfigError(f"plan config needs {key!r}")
    plan = capacity_plan(
        float(cfg["alpha"]), float(cfg["lambda"]), float(cfg["gamma"]),
        params, kappa1=cfg.get("kappa1"), kappa2=cfg.get("kappa2"),
        kappa3=cfg.get("kappa3"))
    path = os.path.join(out_dir, "plan.json")
    atomic_write(path, _json_text(plan.as_dict()))
    return [], [path]


def _run_kwargs(cfg: dict) -> dict:
    kwargs = {}
    if "horizon" in cfg:
        kwargs["horizon"] = float(cfg["horizon"])
    if "warmup" in cfg:
        kwargs["warmup"] = float(cfg["warmup"])
    return kwargs


def cmd_scaling(cfg: dict, out_dir: str, master: int, jobs: int,
                fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    betas = cfg.get("beta", [1.0])
    if not isinstance(betas, list):
        betas = [betas]
    lambda_grid = [float(v) for v in
                   cfg.get("lambda_grid", [5, 10, 20, 40, 80, 160, 320])]
    n_seeds = _seed_count(cfg)
    series = {}
    for beta in betas:
        series[f"beta={beta}"] = exp.scaling_experiment(
            float(beta), lambda_grid, params=params,
            policy=cfg.get("policy", "PoD(2)"),
            alpha=float(cfg.get("alpha", exp.ALPHA_DEFAULT)),
            c_coef=float(cfg.get("c_coef", exp.C_COEF_DEFAULT)),
            t_r_tilde=float(cfg.get("t_r_tilde", exp.T_R_TILDE_DEFAULT)),
            n_seeds=n_seeds, master_seed=master, jobs=jobs,
            **_run_kwargs(cfg))
    rows = []
    for s in series.values():
        rows.extend(exp.scaling_rows(s))
    outputs = [
        write_rows(out_dir, "scaling_results", rows, fmt),
        write_rows(out_dir, "exponents", exp.exponents_rows(series), fmt),
    ]
    return exp.seed_list(master, n_seeds), outputs


def cmd_compare(cfg: dict, out_dir: str, master: int, jobs: int,
                fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    names = cfg.get("series", ["A", "C"])
    for name in names:
        if name not in exp.SERIES_90PCT:
            raise ConfigError(f"unknown series {name!r}")
    n_seeds = _seed_count(cfg)
    rows = exp.compare_policies(
        params=params,
        lambda_grid=[float(v) for v in cfg["lambda_grid"]]
        if "lambda_grid" in cfg else None,
        series={k: exp.SERIES_90PCT[k] for k in names},
        policies=tuple(cfg.get("policies", ["CD", "CAD", "PoD(2)"])),
        n_seeds=n_seeds, master_seed=master, jobs=jobs,
        **_run_kwargs(cfg))
    outputs = [write_rows(out_dir, "policy_compare", rows, fmt)]
    return exp.seed_list(master, n_seeds), outputs


def cmd_pod_sweep(cfg: dict, out_dir: str, master: int, jobs: int,
                  fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    n_seeds = _seed_count(cfg)
    res = exp.pod_sweep(
        params=params,
        d_values=[int(v) for v in cfg["d_values"]]
        if "d_values" in cfg else None,
        pack_sizes=[float(v) for v in cfg["pack_sizes"]]
        if "pack_sizes" in cfg else None,
        lam=float(cfg.get("lambda", 160.0)), n=int(cfg.get("n", 3072)),
        m=int(cfg.get("m", 2600)), n_seeds=n_seeds, master_seed=master,
        jobs=jobs, **_run_kwargs(cfg))
    rows = list(res.rows)
    outputs = [write_rows(out_dir, "pod_sweep", rows, fmt)]
    argmax_rows = [{"pack_kwh": pack, "best_d": res.argmax_d[pack]}
                   for pack in res.pack_sizes]
    outputs.append(write_rows(out_dir, "pod_argmax", argmax_rows, fmt))
    return exp.seed_list(master, n_seeds), outputs


def cmd_calibrate_tr(cfg: dict, out_dir: str, master: int, jobs: int,
                     fmt: str) -> tuple[list[int], list[str]]:
    params = _params_from(cfg)
    n_seeds = _seed_count(cfg)
    est = exp.calibrate_tr(
        params=params, lam=float(cfg.get("lambda", 160.0)),
        n=int(cfg.get("n", 3072)), m=int(cfg.get("m", 2600)),
        policy=cfg.get("policy", "PoD(2)"), n_seeds=n_seeds,
        master_seed=master, jobs=jobs, **_run_kwargs(cfg))
    path = os.path.join(out_dir, "calibration.json")
    atomic_write(path, _json_text({"t_r_tilde": est}))
    sys.stdout.write(f"t_r_tilde = {est:.4f} min\n")
    return exp.seed_list(master, n_seeds), [path]


COMMANDS = {
    "simulate": cmd_simulate,
    "ode": cmd_ode,
    "equilibrium": cmd_equilibrium,
    "bounds": cmd_bounds,
    "plan": cmd_plan,
    "scaling": cmd_scaling,
    "compare": cmd_compare,
    "pod-sweep": cmd_pod_sweep,
    "calibrate-tr": cmd_calibrate_tr,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad arguments are validation
    # failures here, which exit 1.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evfleet", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="TOML config (or a manifest.json)")
    parser.add_argument("--out", help="output directory "
                        "(default: $EVFLEET_OUT or cwd)")
    parser.add_argument("--seed", type=int, default=0,
                        help="master seed (default 0)")
    parser.add_argument("--jobs", type=int,
                        default=os.cpu_count() or 1,
                        help="parallel replication workers")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    # conveniences for the bounds subcommand
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--gamma", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out or os.environ.get("EVFLEET_OUT") or os.getcwd()
    try:
        cfg = load_config(args.config) if args.config else {}
        for key, val in (("alpha", args.alpha), ("lambda", args.lam),
                         ("gamma", args.gamma)):
            if val is not None:
                cfg[key] = val
        check_keys(cfg, args.subcommand)
        os.makedirs(out_dir, exist_ok=True)
        seeds, outputs = COMMANDS[args.subcommand](
            cfg, out_dir, args.seed & ((1 << 64) - 1), max(args.jobs, 1),
            args.format)
    except (ConfigError, ValueError, FileNotFoundError, KeyError,
            tomllib.TOMLDecodeError) as exc:
        print(f"evfleet: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:                    # noqa: BLE001
        print(f"evfleet: runtime failure: {exc}", file=sys.stderr)
        return 2
    write_manifest(out_dir, args.subcommand, cfg, seeds, outputs,
                   args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
