"""Discrete-event simulation of the fleet: public entry points.

The event loop lives in evfleet._engine (compiled) with
evfleet.engine_py as the pure-Python fallback; the two replay the same
trajectory for a given (config, seed). This module validates configs,
selects the engine, and wraps results.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import engine_py
from .engine_py import POLICY_CAD, POLICY_CD, POLICY_POD, EngineConfig
from .model import SystemParams

try:
    from . import _engine as _compiled
except ImportError:  # pragma: no cover - depends on the build environment
    _compiled = None

ACTIVITY_NAMES = ("idle", "picking_up", "driving_with_customer",
                  "driving_to_charger", "waiting_at_charger", "charging")


def engine_name() -> str:
    return "compiled" if _compiled is not None else "python"


def get_engine(prefer: str | None = None):
    """Engine module to run with; prefer is 'compiled' or 'python'."""
    if prefer == "python":
        return engine_py
    if prefer == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled engine is not available")
        return _compiled
    return _compiled if _compiled is not None else engine_py


def parse_policy(policy: str, d: int | None = None) -> tuple[int, int]:
    """Policy string -> (policy code, pool size d)."""
    s = policy.strip()
    mt = re.fullmatch(r"(?i)pod\s*\(?\s*(\d+)?\s*\)?", s)
    if mt:
        pool = int(mt.group(1)) if mt.group(1) else d
        if pool is None:
            raise ValueError("power-of-d policy needs d")
        if pool < 1:
            raise ValueError("d must be >= 1")
        return POLICY_POD, pool
    up = s.upper()
    if up == "CD":
        return POLICY_CD, 1
    if up == "CAD":
        return POLICY_CAD, 1
    raise ValueError(f"unknown policy {policy!r} (CD, CAD, or PoD(d))")


@dataclass
class RunMetrics:
    seed: int
    service_level: float
    avg_pickup_min: float
    avg_dtc_min: float
    workload_served: float
    t_r_fulfilled_min: float
    effective_arrivals: int
    served: int
    soc_underflow: int
    engine: str
    ts_time: np.ndarray = field(repr=False)
    ts_counts: np.ndarray = field(repr=False)
    ts_mean_soc: np.ndarray = field(repr=False)

    def metrics_row(self) -> dict:
        return {
            "seed": self.seed,
            "service_level": self.service_level,
            "avg_pickup_min": self.avg_pickup_min,
            "avg_dtc_min": self.avg_dtc_min,
            "workload_pct": 100.0 * self.workload_served,
            "t_r_fulfilled_min": self.t_r_fulfilled_min,
        }


def build_engine_config(params: SystemParams, n: int, m: int, policy: str,
                        lam: float, horizon: float = 1000.0,
                        warmup: float = 500.0, seed: int = 0,
                        d: int | None = None,
                        charger_claiming: str = "blind") -> EngineConfig:
    if n < 1:
        raise ValueError("fleet size n must be >= 1")
    if m < params.posts_per_charger:
        raise ValueError("m must be at least posts_per_charger")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if not horizon > warmup >= 0:
        raise ValueError("need horizon > warmup >= 0")
    if charger_claiming not in ("blind", "claiming"):
        raise ValueError("charger_claiming must be 'blind' or 'claiming'")
    pol, pool = parse_policy(policy, d)
    return EngineConfig(
        n=int(n), m=int(m), m_p=params.posts_per_charger, lam=float(lam),
        policy=pol, d=pool, side=params.region_side,
        speed=params.speed_miles_per_min, drain=params.soc_drain_per_min,
        gain=params.soc_gain_per_min, s_min=params.s_min,
        s_max=params.s_max, horizon=float(horizon), warmup=float(warmup),
        seed=int(seed) & ((1 << 64) - 1),
        claiming=charger_claiming == "claiming")


def run(params: SystemParams, n: int, m: int, policy: str, lam: float,
        horizon: float = 1000.0, warmup: float = 500.0, seed: int = 0,
        d: int | None = None, charger_claiming: str = "blind",
        engine: str | None = None) -> RunMetrics:
    """One replication; a deterministic function of (config, seed)."""
    cfg = build_engine_config(params, n, m, policy, lam, horizon, warmup,
                              seed, d, charger_claiming)
    eng = get_engine(engine)
    out = eng.run_engine(cfg)
    return RunMetrics(
        seed=cfg.seed,
        service_level=out["service_level"],
        avg_pickup_min=out["avg_pickup_min"],
        avg_dtc_min=out["avg_dtc_min"],
        workload_served=out["workload_served"],
        t_r_fulfilled_min=out["t_r_fulfilled_min"],
        effective_arrivals=out["effective_arrivals"],
        served=out["served"],
        soc_underflow=out["soc_underflow"],
        engine="python" if eng is engine_py else "compiled",
        ts_time=out["ts_time"],
        ts_counts=out["ts_counts"],
        ts_mean_soc=out["ts_mean_soc"])
