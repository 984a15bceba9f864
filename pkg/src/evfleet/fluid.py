"""Aggregate (fluid) models of the fleet.

Two levels of description are provided. The generic three-state ODE tracks
busy vehicles, charging vehicles, and total battery energy under arbitrary
controls. The level-resolved ODE tracks, for each battery level j, the
cumulative counts of parked (idle/charging/waiting) and busy vehicles that
can complete at most j more trips, under the power-of-d dispatch rule with
admission control. The level-resolved system admits a stationary point
constructed by nested bisection (`equilibrium`), plus a closed-form upper
bound on its top parked count (`hat_fixed_point`).

State conventions: `xc[j]` counts parked vehicles able to serve at most j
trips, `xb[j]` busy vehicles able to serve at most j trips; both vectors
have length `levels + 1` and are non-decreasing in j (`xb[0]` is always 0).
Counts are real-valued. Time is in minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ModelDegenerateError(ValueError):
    """The pool size d exceeds the number of parked vehicles it samples."""


class FluidDomainError(ValueError):
    """A rate denominator left its domain (state outside the model)."""


class DivergenceError(RuntimeError):
    """Integration left the invariant region by more than the clamp."""


@dataclass(frozen=True)
class FluidParams:
    """Constants of the level-resolved system."""

    lambda_tilde: float   # admitted arrival rate, per minute
    n: float              # fleet size
    m: float              # charging posts
    A: float              # post-availability clip on parked counts
    d: int                # dispatch pool size
    t_r: float            # trip time, minutes
    t_b: float            # busy-time budget, minutes
    r: float              # discharge-to-charge rate ratio
    tau1: float           # pickup friction constant, minutes
    tau2: float           # drive-to-charger friction constant, minutes
    levels: int           # trips per full pack (vector length - 1)

    def __post_init__(self):
        if self.lambda_tilde <= 0 or self.n <= 0 or self.m <= 0:
            raise ValueError("lambda_tilde, n, m must be positive")
        if not 0 < self.A <= self.m:
            raise ValueError("need 0 < A <= m")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.t_r <= 0 or self.t_b < self.t_r:
            raise ValueError("need t_b >= t_r > 0")
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("tau1/tau2 must be nonnegative")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")


@dataclass
class FluidState:
    xc: np.ndarray
    xb: np.ndarray

    def copy(self) -> "FluidState":
        return FluidState(self.xc.copy(), self.xb.copy())


def match_prob(xc_j: float, xc_top: float, d: int) -> float:
    """Probability that a size-d uniform sample without replacement from
    the parked fleet is not entirely inside the lowest-j levels.

    Set to 0 when fewer than d vehicles sit at those levels (the sample
    cannot be formed); the stationary solver relies on this clamp.
    """
    if xc_top < d:
        raise ModelDegenerateError(
            f"parked fleet {xc_top} smaller than pool size {d}")
    if xc_j < d:
        return 0.0
    prod = 1.0
    for i in range(d):
        prod *= (xc_j - i) / (xc_top - i)
    p = 1.0 - prod
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def _match_prob_dyn(xc_j: float, xc_top: float, d: int) -> float:
    """match_prob with its continuous extension below d vehicles.

    With fewer than d vehicles in the lowest-j levels a size-d sample
    always reaches above level j, so the sampling probability is 1 there
    (the product form tends to 1 as xc_j -> d anyway). The zero clamp in
    match_prob is what the stationary solver inverts, but used inside the
    vector field it manufactures an absorbing frozen state (p0 = 0 kills
    all matching permanently once xc_0 dips under d), so the dynamics use
    this monotone, continuous version instead.
    """
    if xc_top < d:
        raise ModelDegenerateError(
            f"parked fleet {xc_top} smaller than pool size {d}")
    if xc_j < d:
        return 1.0
    prod = 1.0
    for i in range(d):
        prod *= (xc_j - i) / (xc_top - i)
    return min(max(1.0 - prod, 0.0), 1.0)


def match_prob_bounds(xc_j: float, xc_top: float, d: int
                      ) -> tuple[float, float]:
    """Sandwich for match_prob: with-replacement sampling from below, a
    d-shifted ratio from above. Both are 0 when xc_j < d."""
    if xc_top < d:
        raise ModelDegenerateError(
            f"parked fleet {xc_top} smaller than pool size {d}")
    if xc_j < d:
        return 0.0, 0.0
    ratio = xc_j / xc_top
    lower = 1.0 - ratio ** d
    upper = 1.0 - ratio ** d * (
        (1.0 - d / xc_j) / (1.0 - d / xc_top)) ** d
    return max(lower, 0.0), min(max(upper, 0.0), 1.0)


def mu(state: FluidState, fp: FluidParams) -> float:
    """Trip completion rate: reciprocal of pickup + trip + charger-drive
    time at the current congestion level."""
    top = fp.levels
    free = fp.n - state.xb[top]
    if free <= 0:
        raise FluidDomainError("no parked vehicles left (n - xb_top <= 0)")
    clipped = min(state.xc[top - 1], fp.A)
    posts = fp.m - clipped
    if posts <= 0:
        raise FluidDomainError("no free posts left (m - min(xc, A) <= 0)")
    inv = (fp.tau1 * math.sqrt(fp.d / free) + fp.t_r
           + fp.tau2 / math.sqrt(posts))
    return 1.0 / inv


def ode_rhs(state: FluidState, fp: FluidParams,
            gate: float | None = None) -> FluidState:
    """Time derivatives of the level-resolved system.

    Matching removes parked mass at rate lt*(p0 - p_j) per level band (the
    top band never matches: p at the top is identically 0, which also
    makes xc[top] + xb[top] an exact invariant), charging moves parked
    mass up one level per r*t_b minutes with the post clip applied, and
    completions at rate mu return busy mass to the parked side. Admission
    shuts matching off when busy mass exceeds t_r * lt; the integrator
    pins the gate at each step's start, so it can be passed in.
    """
    top = fp.levels
    lt = fp.lambda_tilde
    xc, xb = state.xc, state.xb
    if gate is None:
        gate = 1.0 if xb[top] <= fp.t_r * lt else 0.0
    rate = mu(state, fp)
    p = np.zeros(top + 1)
    for j in range(top):
        p[j] = _match_prob_dyn(xc[j], xc[top], fp.d)
    clipped = np.minimum(xc, fp.A)
    flow = (p[0] - p) * lt * gate
    dxc = np.empty(top + 1)
    dxb = np.zeros(top + 1)
    for j in range(1, top + 1):
        dxb[j] = flow[j] - xb[j] * rate
    for j in range(1, top):
        dxc[j] = (-flow[j]
                  - (clipped[j] - clipped[j - 1]) / (fp.r * fp.t_b)
                  + xb[j + 1] * rate)
    dxc[top] = -lt * p[0] * gate + xb[top] * rate
    dxc[0] = -clipped[0] / (fp.r * fp.t_b) + xb[1] * rate
    return FluidState(dxc, dxb)


@dataclass
class IntegrationResult:
    times: list[float]
    states: list[FluidState]
    converged: bool
    steps: int

    @property
    def final(self) -> FluidState:
        return self.states[-1]


def integrate(state0: FluidState, fp: FluidParams, t_end: float,
              dt: float | None = None, record_every: int = 1,
              converge_tol: float | None = None) -> IntegrationResult:
    """Fixed-step RK4 forward integration.

    The step is fixed (rather than adaptive) so trajectories are
    bit-reproducible. Tiny negative counts (within 1e-10 * n) are clamped
    to zero after each step; larger excursions or ordering violations
    abort with the offending time.
    """
    if dt is None:
        dt = fp.t_r / 200.0
    if dt > fp.t_r / 100.0:
        raise ValueError("dt must be at most t_r / 100")
    if converge_tol is None:
        converge_tol = 1e-9 * fp.n
    clamp = 1e-10 * fp.n
    order_tol = 1e-9 * fp.n

    def pack(s: FluidState) -> np.ndarray:
        return np.concatenate([s.xc, s.xb])

    def unpack(y: np.ndarray) -> FluidState:
        k = fp.levels + 1
        return FluidState(y[:k], y[k:])

    def rhs(y: np.ndarray, gate: float) -> np.ndarray:
        return pack(ode_rhs(unpack(y), fp, gate))

    top = fp.levels
    y = pack(state0.copy())
    t = 0.0
    times = [0.0]
    states = [state0.copy()]
    converged = False
    steps = 0
    n_steps = int(math.ceil(t_end / dt))
    for step in range(n_steps):
        # the admission indicator is discontinuous: pin it for the whole
        # step so the four stages see one consistent vector field
        gate = 1.0 if y[top + 1 + top] <= fp.t_r * fp.lambda_tilde else 0.0
        k1 = rhs(y, gate)
        if np.max(np.abs(k1)) < converge_tol:
            converged = True
            break
        k2 = rhs(y + 0.5 * dt * k1, gate)
        k3 = rhs(y + 0.5 * dt * k2, gate)
        k4 = rhs(y + dt * k3, gate)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        steps += 1
        low = y.min()
        if low < 0.0:
            if low < -clamp:
                raise DivergenceError(
                    f"count {low} below clamp tolerance at t={t}")
            np.clip(y, 0.0, None, out=y)
        s = unpack(y)
        if (np.diff(s.xc).min(initial=0.0) < -order_tol
                or np.diff(s.xb).min(initial=0.0) < -order_tol):
            raise DivergenceError(f"level ordering violated at t={t}")
        if steps % record_every == 0:
            times.append(t)
            states.append(s.copy())
    if times[-1] != t:
        times.append(t)
        states.append(unpack(y).copy())
    return IntegrationResult(times, states, converged, steps)


@dataclass
class EquilibriumReport:
    xc: np.ndarray
    xb: np.ndarray
    p0: float
    mu: float
    residual: float
    total: float                  # conserved xc[top] + xb[top]
    xc_top_bound: float | None = None
    xc_top_ok: bool | None = None
    xb_top_bound: float | None = None
    xb_top_ok: bool | None = None
    service_rate_lb: float | None = None
    trace: list = field(default_factory=list, repr=False)


def _invert_match_prob(target: float, xc_top: float, d: int,
                       tol: float) -> float:
    """Value xc with match_prob(xc, xc_top, d) == target; the map is
    continuous and strictly decreasing on [d, xc_top]."""
    if target <= 0.0:
        return xc_top
    if target >= match_prob(float(d), xc_top, d):
        return float(d)
    lo, hi = float(d), xc_top   # match_prob: high at lo, 0 at hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if match_prob(mid, xc_top, d) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _chain(x: float, fp: FluidParams, tol: float) -> np.ndarray:
    """Parked-level profile implied by a candidate top count x.

    p0 follows from the top-level balance; the lowest level inverts the
    sampling probability at p0; each next level inverts the probability
    obtained from the matching-rate identity p_j = p0 - xc[j-1]/(r t_b lt).
    """
    top = fp.levels
    lt = fp.lambda_tilde
    p0 = (fp.n - x) / (fp.t_b * lt)
    xc = np.empty(top + 1)
    xc[top] = x
    xc[0] = _invert_match_prob(p0, x, fp.d, tol)
    for j in range(1, top):
        pj = p0 - xc[j - 1] / (fp.r * fp.t_b * lt)
        xc[j] = _invert_match_prob(pj, x, fp.d, tol)
    return xc


def equilibrium(fp: FluidParams, gamma: float | None = None,
                kappa1: float | None = None,
                kappa4: float | None = None) -> EquilibriumReport:
    """Stationary point of the level-resolved system by nested bisection.

    The outer residual x + xc[top-1]/r - n is strictly increasing in the
    candidate top count x (each chained level rises with x), so a sign
    change over [max(d+1, n - t_b*lt), n] brackets the unique root. Busy
    levels are recovered from the stationary matching balance. When gamma
    and kappa1 are supplied, the report carries the second-order bound
    checks on the top counts; kappa4 adds the service-rate lower bound.
    """
    top = fp.levels
    lt = fp.lambda_tilde
    tol = 1e-10 * fp.n

    def residual(x: float) -> float:
        xc = _chain(x, fp, tol)
        return x + xc[top - 1] / fp.r - fp.n

    lo = max(fp.d + 1.0, fp.n - fp.t_b * lt)
    hi = float(fp.n)
    r_lo, r_hi = residual(lo), residual(hi)
    if not (r_lo < 0.0 < r_hi):
        raise FluidDomainError(
            "no sign change for the stationary top count: residual "
            f"({r_lo:.6g} at {lo:.6g}, {r_hi:.6g} at {hi:.6g}); "
            "parameters are outside the planning regime")
    trace = []
    prev = None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r_mid = residual(mid)
        trace.append((mid, r_mid))
        if prev is not None and mid > prev[0]:
            # outer residual must grow with x (uniqueness)
            assert r_mid >= prev[1] - tol, "outer residual not monotone"
        prev = (mid, r_mid)
        if r_mid < 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    xc = _chain(x, fp, tol)
    p0 = (fp.n - x) / (fp.t_b * lt)
    p = np.zeros(top + 1)
    p[0] = p0
    for j in range(1, top):
        p[j] = max(p0 - xc[j - 1] / (fp.r * fp.t_b * lt), 0.0)
    # completion rate, self-consistent with the busy mass it implies
    # (xb_top = lt p0 / mu appears inside its own pickup term)
    charge_leg = fp.tau2 / math.sqrt(fp.m - min(xc[top - 1], fp.A))
    rate = 1.0 / fp.t_b
    for _ in range(200):
        busy_top = lt * p0 / rate
        if busy_top >= fp.n:
            raise FluidDomainError("busy mass exceeds the fleet")
        nxt = 1.0 / (fp.tau1 * math.sqrt(fp.d / (fp.n - busy_top))
                     + fp.t_r + charge_leg)
        if abs(nxt - rate) < 1e-15:
            rate = nxt
            break
        rate = nxt
    xb = np.zeros(top + 1)
    for j in range(1, top + 1):
        xb[j] = lt * (p0 - p[j]) / rate
    report = EquilibriumReport(
        xc=xc, xb=xb, p0=p0, mu=rate, residual=residual(x),
        total=float(x + xb[top]), trace=trace)
    if gamma is not None and kappa1 is not None:
        second = (fp.r * fp.t_r * top / gamma)
        report.xc_top_bound = (fp.r * fp.t_r * lt
                               + (second + 2.0 * kappa1) * lt ** (1.0 - gamma))
        report.xc_top_ok = bool(x <= report.xc_top_bound)
        report.xb_top_bound = (fp.t_r * lt
                               - (second + kappa1) * lt ** (1.0 - gamma))
        report.xb_top_ok = bool(xb[top] >= report.xb_top_bound)
    if gamma is not None and kappa4 is not None:
        report.service_rate_lb = lt - kappa4 * lt ** (1.0 - gamma)
    return report


def hat_fixed_point(fp: FluidParams, kappa1: float, gamma: float) -> float:
    """Closed-form upper bound on the stationary top parked count.

    Root of  1 - (n-x)/(t_b lt) = (r(n-x)/x)^(d^L) * (r t_b / (r t_r +
    kappa1 lt^-gamma))^((d^L-d)/(d-1)),  L = levels. The exponent d^L is
    astronomically large, so both sides are compared in the log domain,
    where the left side increases and the right side decreases in x.
    """
    if fp.d < 2:
        raise ValueError("the bound requires d >= 2")
    lt = fp.lambda_tilde
    big = float(fp.d) ** fp.levels
    expo = (big - fp.d) / (fp.d - 1.0)
    const = expo * math.log(
        fp.r * fp.t_b / (fp.r * fp.t_r + kappa1 * lt ** (-gamma)))

    def gap(x: float) -> float:
        lhs = 1.0 - (fp.n - x) / (fp.t_b * lt)
        if lhs <= 0.0:
            return -math.inf
        if x >= fp.n:
            return math.inf
        rhs_log = big * math.log(fp.r * (fp.n - x) / x) + const
        return math.log(lhs) - rhs_log

    lo = max(fp.n - fp.t_b * lt, 0.0)
    hi = float(fp.n)
    span = hi - lo
    lo += 1e-14 * span
    hi -= 1e-14 * span
    if gap(lo) > 0.0:   # left side already dominates at the bracket edge
        return lo
    while hi - lo > 1e-12 * fp.n:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class GenericControls:
    """Policy inputs of the three-state aggregate model at one instant."""

    lambda_eff: float   # admitted arrival rate, per minute
    t_p: float          # pickup time, minutes
    p_dc: float         # fraction of charger-bound vehicles that arrive
    t_dc: float         # drive-to-charger time, minutes
    t_c: float          # charging duration, minutes
    c_dc: float         # vehicles driving to a charger
    c_idle: float       # idle vehicles
    t_r: float = 15.14  # trip time, minutes


def generic_ode_rhs(q: float, c_chg: float, energy: float,
                    controls: GenericControls, n: float, m: float,
                    tau1: float, tau2: float, pack: float,
                    charge_kw: float, discharge_kw: float
                    ) -> tuple[float, float, float]:
    """Derivatives of busy vehicles q, charging vehicles c_chg, and total
    battery energy (kWh) under arbitrary controls.

    The control values must respect the spatial frictions (pickup at least
    tau1/sqrt(n-q), charger drive at least tau2/sqrt(m-c_chg)) and the
    physical charging time cap pack/charge_kw.
    """
    if not 0.0 <= q < n:
        raise ValueError("q must lie in [0, n)")
    if not 0.0 <= c_chg < m:
        raise ValueError("c_chg must lie in [0, m)")
    if controls.t_p < tau1 / math.sqrt(n - q) - 1e-12:
        raise ValueError("pickup time below the spatial friction floor")
    if controls.t_dc < tau2 / math.sqrt(m - c_chg) - 1e-12:
        raise ValueError("charger-drive time below the friction floor")
    if controls.t_c > pack / charge_kw * 60.0 + 1e-12:
        raise ValueError("charging duration exceeds a full pack")
    dq = controls.lambda_eff - q / (controls.t_p + controls.t_r)
    dc = (controls.p_dc * controls.c_dc / controls.t_dc
          - c_chg / controls.t_c)
    driving = n - c_chg - controls.c_idle
    denergy = (c_chg * charge_kw - driving * discharge_kw) / 60.0
    return dq, dc, denergy


def random_state(fp: FluidParams, total: float, seed: int) -> FluidState:
    """Random feasible state with the given conserved top-level total.

    Used by the stability experiments: the flow conserves xc[top] +
    xb[top], so convergence to a particular stationary point is only
    meaningful among states sharing its total.
    """
    rng = np.random.default_rng(seed)
    top = fp.levels
    busy_cap = min(total, fp.t_r * fp.lambda_tilde)
    xb_top = rng.uniform(0.1, 0.9) * busy_cap
    xc_top = total - xb_top
    xc = np.sort(rng.uniform(0.0, xc_top, top + 1))
    xc[top] = xc_top
    xb = np.sort(rng.uniform(0.0, xb_top, top + 1))
    xb[top] = xb_top
    xb[0] = 0.0
    return FluidState(xc, xb)
