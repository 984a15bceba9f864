"""Shared system parameters, derived quantities, and the capacity-plan
constructor.

Unit conventions used throughout the package: time in minutes, distance in
miles, energy in kWh, battery level (SoC) as a fraction of the pack size.
Power ratings (charge/discharge) stay in kW and are converted at the point
of use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def _geometric_tau(region_side: float, avg_speed: float) -> float:
    # Expected distance to the nearest of k uniform points in a square of
    # side L is ~ L/(2 sqrt(k)); travel time then scales as tau/sqrt(k)
    # with tau = L/(2 v). Used as the default friction constant.
    return 0.5 * region_side / (avg_speed / 60.0)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the fleet, the chargers, and the region."""

    charge_rate: float = 20.0       # r_c, kW
    discharge_rate: float = 5.0     # r_d, kW
    pack_size: float = 40.0         # p*, kWh
    avg_speed: float = 20.0         # miles/hour
    region_side: float = 10.0       # miles
    trip_time: float = 15.14        # T_R, minutes
    tau1: float | None = None       # pickup-time constant, minutes
    tau2: float | None = None       # drive-to-charger constant, minutes
    s_min: float = 0.2
    s_max: float = 0.9
    posts_per_charger: int = 8

    def __post_init__(self):
        if self.tau1 is None:
            object.__setattr__(
                self, "tau1",
                _geometric_tau(self.region_side, self.avg_speed))
        if self.tau2 is None:
            object.__setattr__(
                self, "tau2",
                _geometric_tau(self.region_side, self.avg_speed))
        if not self.charge_rate > self.discharge_rate > 0:
            raise ValueError(
                "charge_rate must exceed discharge_rate and both must be "
                f"positive (got {self.charge_rate}, {self.discharge_rate})")
        if not 0 <= self.s_min < self.s_max <= 1:
            raise ValueError(
                f"need 0 <= s_min < s_max <= 1 (got {self.s_min}, {self.s_max})")
        for name in ("pack_size", "avg_speed", "region_side", "trip_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("tau1/tau2 must be nonnegative")
        if self.posts_per_charger < 1:
            raise ValueError("posts_per_charger must be >= 1")

    @property
    def r(self) -> float:
        """Discharge-to-charge rate ratio r = r_d / r_c."""
        return self.discharge_rate / self.charge_rate

    @property
    def speed_miles_per_min(self) -> float:
        return self.avg_speed / 60.0

    @property
    def soc_drain_per_min(self) -> float:
        """SoC lost per minute of driving."""
        return self.discharge_rate / 60.0 / self.pack_size

    @property
    def soc_gain_per_min(self) -> float:
        """SoC gained per minute at a post."""
        return self.charge_rate / 60.0 / self.pack_size


@dataclass(frozen=True)
class DerivedQuantities:
    """Busy-time bound and per-trip energy discretization."""

    r: float
    T_B: float          # minutes
    delta: float        # kWh per standardized trip
    N_trips: int        # floor(p* / delta)
    N_trips_nominal: int  # rounded variant using T_R in place of T_B

    def __post_init__(self):
        if self.N_trips < 1:
            raise ValueError("pack too small: it must support at least one trip")


def derive_quantities(params: SystemParams, n: float, m: float, A: float,
                      d: float, lambda_tilde: float) -> DerivedQuantities:
    """Busy-time bound T_B, per-trip energy delta, and trips-per-charge.

    T_B = tau1 sqrt(d / (n - T_R lt)) + T_R + tau2 / sqrt(m - A), in
    minutes; delta = r_d * T_B converted to kWh.
    """
    if n <= params.trip_time * lambda_tilde:
        raise ValueError(
            f"infeasible: n={n} must exceed T_R*lambda_tilde="
            f"{params.trip_time * lambda_tilde}")
    if m <= A:
        raise ValueError(f"infeasible: m={m} must exceed A={A}")
    T_B = (params.tau1 * math.sqrt(d / (n - params.trip_time * lambda_tilde))
           + params.trip_time
           + params.tau2 / math.sqrt(m - A))
    delta = params.discharge_rate * T_B / 60.0
    N_trips = math.floor(params.pack_size / delta)
    nominal = round(params.pack_size /
                    (params.discharge_rate * params.trip_time / 60.0))
    return DerivedQuantities(r=params.r, T_B=T_B, delta=delta,
                             N_trips=N_trips, N_trips_nominal=nominal)


def solve_d(lambda_tilde: float, gamma: float, N_trips: int,
            tol: float = 1e-9, max_iter: int = 10_000) -> int:
    """Smallest integer d >= 2 above the fixed point of
    d = lambda_tilde^(gamma/N) (log d)^(1/N).

    Damped iteration from d0 = 2; natural log.
    """
    if lambda_tilde <= 1:
        raise ValueError("lambda_tilde must exceed 1")
    if N_trips < 2:
        raise ValueError("N_trips must be >= 2")
    a = lambda_tilde ** (gamma / N_trips)
    inv_n = 1.0 / N_trips
    d = 2.0
    for _ in range(max_iter):
        nxt = 0.5 * (d + a * math.log(d) ** inv_n)
        nxt = max(nxt, 1.0 + 1e-12)
        if abs(nxt - d) < tol:
            return max(2, math.ceil(nxt))
        d = nxt
    raise RuntimeError("fixed-point iteration for d did not converge")


@dataclass(frozen=True)
class CapacityPlan:
    """Fleet/charger prescription for a target service level."""

    lambda_tilde: float
    n: int
    m: int
    A: int
    d: int
    gamma: float
    kappa1: float
    kappa2: float
    kappa3: float
    demand_warning: bool = field(default=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "lambda_tilde": self.lambda_tilde,
            "n": self.n,
            "m": self.m,
            "A": self.A,
            "d": self.d,
            "gamma": self.gamma,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
        }


def capacity_plan(alpha: float, lam: float, gamma: float,
                  params: SystemParams,
                  kappa1: float | None = None,
                  kappa2: float | None = None,
                  kappa3: float | None = None) -> CapacityPlan:
    """Construct (lambda_tilde, n, m, A, d) for target service level alpha.

    lambda_tilde = alpha lam + kappa3 lam^(1-gamma);
    n = (1+r) T_R lt + kappa1 lt^(1-gamma);
    m = r T_R lt + kappa2 lt^(2 gamma);  A = m - lt^(2 gamma).
    Integer fields are rounded up so the defining inequalities survive
    rounding.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    r = params.r
    T_R = params.trip_time
    # Trips-per-charge under the zero-buffer busy time; refined below once
    # the plan's own T_B is known.
    N_trips = max(2, math.floor(
        params.pack_size / (params.discharge_rate * T_R / 60.0)))
    gamma_cap = 1.0 / (2.0 + 1.0 / N_trips)
    if not (1.0 / 3.0 <= gamma < gamma_cap):
        raise ValueError(
            f"gamma={gamma} outside [1/3, {gamma_cap:.6f}) for N_trips={N_trips}")
    k1_min = 2.0 * r * params.tau2
    k2_min = 2.0 + 4.0 * r * params.tau2
    if kappa1 is None:
        kappa1 = k1_min
    if kappa2 is None:
        kappa2 = k2_min
    if kappa1 < k1_min:
        raise ValueError(f"kappa1 must be >= 2 r tau2 = {k1_min}")
    if kappa2 < k2_min:
        raise ValueError(f"kappa2 must be >= 2 + 4 r tau2 = {k2_min}")
    if kappa3 is None:
        kappa3 = r * N_trips / gamma + (kappa1 + 2.0 * params.tau2) / T_R
    lt = alpha * lam + kappa3 * lam ** (1.0 - gamma)
    warn = lt > lam
    buffer_chg = math.ceil(lt ** (2.0 * gamma))
    n = math.ceil((1.0 + r) * T_R * lt + kappa1 * lt ** (1.0 - gamma))
    m = math.ceil(r * T_R * lt + kappa2 * lt ** (2.0 * gamma))
    A = m - buffer_chg
    d = solve_d(lt, gamma, N_trips)
    # Refine trips-per-charge with the plan's own busy-time bound; d only
    # enters through a slowly varying log so one pass settles it.
    dq = derive_quantities(params, n, m, A, d, lt)
    if dq.N_trips >= 2 and dq.N_trips != N_trips:
        d = solve_d(lt, gamma, dq.N_trips)
    return CapacityPlan(lambda_tilde=lt, n=n, m=m, A=A, d=d, gamma=gamma,
                        kappa1=kappa1, kappa2=kappa2, kappa3=kappa3,
                        demand_warning=warn)
