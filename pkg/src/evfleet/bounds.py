"""Analytic lower bounds on fleet size and charger count.

Constant-rate bounds come in a first-order form (exact coefficients) and a
universal second-order form that only pins down exponents, plus three
closed-form comparisons: the closest-dispatch penalty, the pack-size vs
fleet-size tradeoff, and battery swapping vs charging. The varying-rate
bounds cover a square-wave demand profile, splitting into three service
level regimes with a charger/fleet tradeoff parameter in the upper two.

All bounds are real-valued; callers round as needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class DemandProfile:
    """Square-wave arrival rate: lam for valley_length minutes, then
    peak_multiplier * lam for peak_length minutes, repeating."""

    base_rate: float          # valley arrivals/min
    peak_multiplier: float    # c
    valley_length: float      # T1, minutes
    peak_length: float        # T2, minutes

    def __post_init__(self):
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")
        if self.peak_multiplier <= 1:
            raise ValueError("peak_multiplier must exceed 1")
        if self.valley_length <= 0 or self.peak_length <= 0:
            raise ValueError("valley/peak lengths must be positive")

    @property
    def lambda_avg(self) -> float:
        """Time-average arrival rate over one valley + peak cycle."""
        t1, t2 = self.valley_length, self.peak_length
        return (t1 + self.peak_multiplier * t2) / (t1 + t2) * self.base_rate


@dataclass(frozen=True)
class BoundResult:
    """A (fleet, chargers) lower-bound pair with the regime it came from."""

    n_lb: float
    m_lb: float
    case_id: str | None = None
    c_alpha: float | None = None

    def __post_init__(self):
        if self.n_lb < 0 or self.m_lb < 0:
            raise ValueError("bounds must be nonnegative")


def first_order_bounds(alpha: float, lam: float, trip_time: float,
                       r: float) -> tuple[float, float]:
    """Leading-order requirements to serve a fraction alpha of demand:
    n >= (1+r) T_R alpha lam vehicles, m >= r T_R alpha lam posts."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    base = trip_time * alpha * lam
    return (1.0 + r) * base, r * base


def universal_scaling(alpha: float, lam: float, gamma: float,
                      trip_time: float, r: float
                      ) -> tuple[tuple[float, float], tuple[float, float]]:
    """Second-order scaling: ((n leading term, fleet buffer exponent),
    (m leading term, charger buffer exponent)).

    The buffer constants are existential, so only the exponents 1 - gamma
    and 2 gamma are reported alongside the first-order terms; compare them
    against regression fits, not against absolute counts.
    """
    if not (1.0 / 3.0 <= gamma <= 0.5):
        raise ValueError(f"gamma={gamma} outside [1/3, 1/2]")
    n_lead, m_lead = first_order_bounds(alpha, lam, trip_time, r)
    return (n_lead, 1.0 - gamma), (m_lead, 2.0 * gamma)


def cd_failure_epsilon(delta: float, trip_time: float, r: float,
                       tau1: float, n_trips: int) -> float:
    """Extra fleet fraction that nearest-vehicle dispatch provably wastes.

    Serving a fraction delta of demand under dispatch-to-nearest needs
    n >= (1+r) T_R alpha lam + epsilon lam with this epsilon: the nearest
    vehicle is sometimes one that cannot take the trip, and the resulting
    drops cost a fleet buffer proportional to lam rather than a vanishing
    power of it. epsilon shrinks as the pack supports more trips per
    charge.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if trip_time <= 0 or r <= 0 or tau1 < 0 or n_trips < 1:
        raise ValueError("inputs must be positive (tau1 may be 0)")
    mu_l = 1.0 / (trip_time + tau1 * math.sqrt(1.0 + r) / math.sqrt(r))
    q = 1.0 / (delta * mu_l * trip_time)
    if abs(q - 1.0) < 1e-12:
        geom = 1.0 / n_trips    # limit of (q-1)/(q^N - 1) at q = 1
    elif n_trips * math.log(q) > 700.0:
        # q^N overflows a float; (q-1)/(q^N - 1) ~ (q-1) q^-N there
        geom = (q - 1.0) * math.exp(-n_trips * math.log(q))
    else:
        geom = (q - 1.0) / (q ** n_trips - 1.0)
    return trip_time * r * delta * min(1.0 / (n_trips + 1), geom)


def pack_size_tradeoff(n_trips: int, lam: float, trip_time: float,
                       r: float) -> float:
    """Fleet size sufficient at a pack supporting n_trips trips per charge:
    (1+r) T_R lam plus a buffer lam^((1 + 1/N)/(2 + 1/N)) with unit
    coefficient. The buffer exponent falls toward 1/2 as packs grow."""
    if n_trips < 1:
        raise ValueError("n_trips must be >= 1")
    if lam <= 0 or trip_time <= 0 or r < 0:
        raise ValueError("lam/trip_time must be positive, r nonnegative")
    exponent = (1.0 + 1.0 / n_trips) / (2.0 + 1.0 / n_trips)
    return (1.0 + r) * trip_time * lam + lam ** exponent


@dataclass(frozen=True)
class SwapChargeComparison:
    """Leading terms and buffer exponents for fleet and battery counts
    under battery swapping vs in-vehicle charging."""

    swap_fleet: tuple[float, float]
    swap_batteries: tuple[float, float]
    charge_fleet: tuple[float, float]
    charge_batteries: tuple[float, float]


def swap_vs_charge(lam: float, trip_time: float, r: float,
                   gamma: float) -> SwapChargeComparison:
    """Compare swapping (vehicles never wait to charge, spare batteries
    charge on the rack) with in-vehicle charging.

    Swapping needs only T_R lam vehicles but (1+r) T_R lam batteries with
    a lam^(2/3) buffer on both; charging ties batteries to vehicles, so
    both counts are (1+r) T_R lam with a lam^(1-gamma) buffer, which is
    never worse than 2/3. Unit buffer coefficients throughout.
    """
    if not (1.0 / 3.0 <= gamma < 0.5):
        raise ValueError(f"gamma={gamma} outside [1/3, 1/2)")
    if lam <= 0 or trip_time <= 0 or r < 0:
        raise ValueError("lam/trip_time must be positive, r nonnegative")
    first = trip_time * lam
    return SwapChargeComparison(
        swap_fleet=(first, 2.0 / 3.0),
        swap_batteries=((1.0 + r) * first, 2.0 / 3.0),
        charge_fleet=((1.0 + r) * first, 1.0 - gamma),
        charge_batteries=((1.0 + r) * first, 1.0 - gamma),
    )


def _check_regime(profile: DemandProfile, r: float) -> float:
    ratio = profile.peak_length / profile.valley_length
    if r * ratio >= 1.0:
        raise ValueError(
            f"unsupported regime: r * T2/T1 = {r * ratio} >= 1")
    return ratio


def _case_boundaries(profile: DemandProfile, r: float
                     ) -> tuple[float, float]:
    ratio = _check_regime(profile, r)
    c = profile.peak_multiplier
    low = (1.0 + ratio) / (1.0 + c * ratio)
    high = (1.0 + ratio) / ((1.0 + c * ratio) * (1.0 - r * ratio))
    return low, high


def varying_case(alpha: float, profile: DemandProfile, r: float) -> str:
    """Service-level regime under a square-wave demand profile.

    "I": low target, peaks can be dropped, constant-rate bounds apply.
    "II": peaks must be partially served, charging shifts toward valleys.
    "III": target so high that peak driving alone sets the fleet size.
    Boundary values fall into the lower regime.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    low, high = _case_boundaries(profile, r)
    if alpha <= low:
        return "I"
    if alpha <= high:
        return "II"
    return "III"


def c_alpha_interval(alpha: float, profile: DemandProfile, r: float,
                     trip_time: float) -> tuple[float, float]:
    """Legal range of the charger/fleet tradeoff parameter for the regime
    that alpha falls in. Regime I has no tradeoff and returns (0, 0)."""
    case = varying_case(alpha, profile, r)
    t1, t2, c = profile.valley_length, profile.peak_length, \
        profile.peak_multiplier
    edge = c * trip_time * (1.0 + t2 / t1) / (t1 + c * t2)
    if case == "I":
        return 0.0, 0.0
    if case == "II":
        hi = alpha - (t1 + t2) / (t1 + c * t2) + edge
    else:
        hi = alpha * r * t2 / t1 - edge
    return 0.0, max(hi, 0.0)


def varying_bounds(alpha: float, profile: DemandProfile, r: float,
                   trip_time: float,
                   c_alpha: float | None = None) -> BoundResult:
    """Fleet/charger lower bounds under a square-wave profile.

    Regime I reduces to the constant-rate bounds at the average rate. In
    regimes II and III the bounds trade off through c_alpha: more chargers
    (larger c_alpha) buy a smaller fleet, down to the constant-rate fleet
    floor, minus an edge term c T_R^2 lam / T2 from cycle boundaries.
    """
    case = varying_case(alpha, profile, r)
    lam_avg = profile.lambda_avg
    t1, t2, c = profile.valley_length, profile.peak_length, \
        profile.peak_multiplier
    lam = profile.base_rate
    n0, m0 = first_order_bounds(alpha, lam_avg, trip_time, r)
    if case == "I":
        return BoundResult(n_lb=n0, m_lb=m0, case_id="I")
    lo, hi = c_alpha_interval(alpha, profile, r, trip_time)
    if c_alpha is None:
        raise ValueError(
            f"regime {case} needs c_alpha in [{lo}, {hi}]")
    if not lo <= c_alpha <= hi:
        raise ValueError(
            f"c_alpha={c_alpha} outside [{lo}, {hi}] for regime {case}")
    low_boundary = (t1 + t2) / (t1 + c * t2)
    n_lb = (n0
            + (t1 / t2) * (alpha - low_boundary - c_alpha)
            * lam_avg * trip_time
            - c * trip_time ** 2 * lam / t2)
    m_lb = m0 + c_alpha * lam_avg * trip_time
    return BoundResult(n_lb=max(n_lb, 0.0), m_lb=max(m_lb, 0.0),
                       case_id=case, c_alpha=c_alpha)


def varying_tradeoff(alpha: float, profile: DemandProfile, r: float,
                     trip_time: float, points: int = 50
                     ) -> list[BoundResult]:
    """The (n_lb, m_lb) tradeoff curve swept over the legal c_alpha range.
    Regime I yields a single point."""
    case = varying_case(alpha, profile, r)
    if case == "I":
        return [varying_bounds(alpha, profile, r, trip_time)]
    lo, hi = c_alpha_interval(alpha, profile, r, trip_time)
    if points < 2:
        raise ValueError("points must be >= 2")
    step = (hi - lo) / (points - 1)
    return [varying_bounds(alpha, profile, r, trip_time, lo + i * step)
            for i in range(points)]


def phase_boundary(c: float, r: float, t2_over_t1: float) -> float:
    """Largest target service level for which the EV-style buffer scaling
    is guaranteed to apply: (1 + T2/T1) / ((1 + c T2/T1)(1 - r T2/T1)),
    clipped to (0, 1]. Above it the peak-driven regime can take over."""
    if c <= 1:
        raise ValueError("peak multiplier c must exceed 1")
    if t2_over_t1 <= 0:
        raise ValueError("T2/T1 must be positive")
    if r * t2_over_t1 >= 1.0:
        raise ValueError(
            f"unsupported regime: r * T2/T1 = {r * t2_over_t1} >= 1")
    star = ((1.0 + t2_over_t1)
            / ((1.0 + c * t2_over_t1) * (1.0 - r * t2_over_t1)))
    return min(star, 1.0)


@dataclass(frozen=True)
class ServiceStats:
    """Measured service fractions: overall, valley-only, peak-only."""

    alpha_eff: float
    alpha_valley: float
    alpha_peak: float


@dataclass(frozen=True)
class RelationCheck:
    ok: bool
    slack: float        # rhs - lhs, nonnegative when the relation holds


def stability_relations_check(stats: ServiceStats, profile: DemandProfile,
                           r: float, trip_time: float, n: float, m: float,
                           tol: float = 0.05) -> dict[str, RelationCheck]:
    """Evaluate the four policy-independent stability relations against
    measured service fractions.

    flow_balance: overall served flow equals the valley/peak mix (equality
    within tol, relative). peak_fleet: n covers peak driving. steady_soc:
    n and m cover the average served flow with charging overhead.
    charge_throughput: posts and idle vehicles can absorb the energy spent
    per unit time. Slack is rhs - lhs (for flow_balance, the signed
    relative gap).
    """
    t1, t2, c = profile.valley_length, profile.peak_length, \
        profile.peak_multiplier
    lam = profile.base_rate
    lam_avg = profile.lambda_avg
    cycle = t1 + t2

    lhs = stats.alpha_eff * lam_avg
    rhs = (stats.alpha_valley * lam * t1
           + stats.alpha_peak * c * lam * t2) / cycle
    rel = (rhs - lhs) / max(abs(rhs), 1e-300)
    out = {"flow_balance": RelationCheck(ok=abs(rel) <= tol, slack=rel)}

    peak_need = stats.alpha_peak * c * lam * trip_time
    out["peak_fleet"] = RelationCheck(
        ok=n >= peak_need * (1.0 - tol), slack=n - peak_need)

    n_need, m_need = first_order_bounds(stats.alpha_eff, lam_avg,
                                        trip_time, r)
    slack = min(n - n_need, m - m_need)
    out["steady_soc"] = RelationCheck(
        ok=n >= n_need * (1.0 - tol) and m >= m_need * (1.0 - tol),
        slack=slack)

    spend = r * stats.alpha_eff * lam_avg * trip_time
    valley_cap = min(m, n - trip_time * lam * stats.alpha_valley
                     + trip_time ** 2 * lam / t1)
    peak_cap = min(m, n - trip_time * c * lam * stats.alpha_peak
                   + trip_time ** 2 * lam / t2)
    absorb = (t1 * valley_cap + t2 * peak_cap) / cycle
    out["charge_throughput"] = RelationCheck(
        ok=spend <= absorb * (1.0 + tol), slack=absorb - spend)
    return out
