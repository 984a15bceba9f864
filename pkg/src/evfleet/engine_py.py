"""Pure-Python event loop for the fleet simulation.

This is the reference implementation; evfleet._engine is a compiled twin
with the same semantics, selected at import time by evfleet.simulator.
Both engines draw from the same splitmix64 streams and break every tie the
same way ((time, sequence) for events, (distance^2, id) for charger and
feasibility queries, a seeded draw for equal-distance dispatch candidates),
so a (config, seed) pair replays to the same trajectory on either engine.

Vehicle activities: 0 idle, 1 picking up, 2 driving with customer,
3 driving to charger, 4 waiting at charger, 5 charging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

IDLE, PICKUP, DRIVE_CUST, DRIVE_CHG, WAIT_CHG, CHARGING = range(6)
POLICY_CD, POLICY_CAD, POLICY_POD = range(3)

# event kinds
EV_ARRIVAL, EV_PICKUP_DONE, EV_DROPOFF, EV_REACH_CHARGER, EV_CHARGE_FULL = \
    range(5)

_M64 = (1 << 64) - 1
_TWO53 = 2.0 ** -53


@dataclass
class EngineConfig:
    n: int
    m: int
    m_p: int
    lam: float            # arrivals per minute
    policy: int           # POLICY_CD / POLICY_CAD / POLICY_POD
    d: int                # pool size for the power-of-d policy
    side: float           # miles
    speed: float          # miles per minute
    drain: float          # SoC lost per driving minute
    gain: float           # SoC gained per charging minute
    s_min: float
    s_max: float
    horizon: float        # minutes
    warmup: float         # minutes
    seed: int
    claiming: bool = False  # count inbound claims when picking a charger
    sample_every: float = 1.0
    trace: bool = False     # collect a replay log of applied events


class _SplitMix64:
    """Deterministic 64-bit stream shared with the compiled engine."""

    def __init__(self, seed: int):
        self.state = seed & _M64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _TWO53

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.uniform()) / rate


def split_seed(master: int, index: int) -> int:
    """Replication seed derived from one master seed."""
    rng = _SplitMix64((master ^ (0xA5A5A5A5A5A5A5A5 * (index + 1))) & _M64)
    return rng.next_u64()


class Engine:
    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg
        self.rng = _SplitMix64(cfg.seed)
        # separate stream for dispatch tie resolution so the arrival
        # draws stay aligned whether or not ties occur
        self.tie_rng = _SplitMix64((cfg.seed ^ 0xC3A5C85C97CB3127) & _M64)
        n, m, m_p = cfg.n, cfg.m, cfg.m_p
        self.n_sites = m // m_p
        if self.n_sites < 1:
            raise ValueError("need at least one charger site (m >= m_p)")
        self.posts = np.full(self.n_sites, m_p, dtype=np.int64)
        self.posts[self.n_sites - 1] += m - self.n_sites * m_p
        # draw order: site positions, vehicle positions, vehicle SoC
        self.sx = np.empty(self.n_sites)
        self.sy = np.empty(self.n_sites)
        for s in range(self.n_sites):
            self.sx[s] = self.rng.uniform() * cfg.side
            self.sy[s] = self.rng.uniform() * cfg.side
        self.vx = np.empty(n)
        self.vy = np.empty(n)
        for i in range(n):
            self.vx[i] = self.rng.uniform() * cfg.side
            self.vy[i] = self.rng.uniform() * cfg.side
        self.soc_val = np.empty(n)
        for i in range(n):
            self.soc_val[i] = 0.4 + 0.2 * self.rng.uniform()
        self.soc_rate = np.zeros(n)
        self.soc_t = np.zeros(n)
        self.activity = np.zeros(n, dtype=np.int64)
        self.dispatchable = np.ones(n, dtype=bool)
        self.version = np.zeros(n, dtype=np.int64)
        self.site_of = np.full(n, -1, dtype=np.int64)
        self.occupied = np.zeros(self.n_sites, dtype=np.int64)
        self.claims = np.zeros(self.n_sites, dtype=np.int64)
        self.queues = [[] for _ in range(self.n_sites)]
        self.events: list = []
        self.seq = 0
        # metrics
        self.arrivals = 0
        self.served = 0
        self.pickup_sum = 0.0
        self.dtc_sum = 0.0
        self.dtc_count = 0
        self.trip_time_sum = 0.0
        self.requested_miles = 0.0
        self.served_miles = 0.0
        self.soc_underflow = 0
        self.ts_time: list[float] = []
        self.ts_counts: list[list[int]] = []
        self.ts_soc: list[float] = []
        self.trace: list[tuple] = []

    # -- helpers ---------------------------------------------------------

    def _push(self, t: float, kind: int, a: int, b: int) -> None:
        heappush(self.events, (t, self.seq, kind, a, b))
        self.seq += 1

    def _soc_now(self, i: int, t: float) -> float:
        s = self.soc_val[i] + self.soc_rate[i] * (t - self.soc_t[i])
        if s > 1.0:
            s = 1.0
        return s

    def _set_soc(self, i: int, t: float, value: float, rate: float) -> None:
        self.soc_val[i] = value
        self.soc_rate[i] = rate
        self.soc_t[i] = t

    def _sample(self, t: float) -> None:
        counts = np.bincount(self.activity, minlength=6).tolist()
        soc = self.soc_val + self.soc_rate * (t - self.soc_t)
        np.clip(soc, 0.0, 1.0, out=soc)
        self.ts_time.append(t)
        self.ts_counts.append(counts)
        self.ts_soc.append(float(soc.sum()) / self.cfg.n)

    # -- queries ---------------------------------------------------------

    def _candidate_d2(self, ox: float, oy: float):
        idx = np.nonzero(self.dispatchable)[0]
        dx = self.vx[idx] - ox
        dy = self.vy[idx] - oy
        return idx, dx * dx + dy * dy

    def _k_nearest(self, ox: float, oy: float, k: int):
        """Ids of the k nearest dispatchable vehicles.

        Vehicles strictly closer than the k-th distance always make the
        pool.  Slots left at the boundary distance are filled by a seeded
        draw among everything tied there: vehicles parked at the same
        charger site are exactly co-located, and favoring low ids would
        let one low-SoC vehicle shadow a full one indefinitely.
        """
        idx, d2 = self._candidate_d2(ox, oy)
        if len(idx) == 0:
            return [], []
        k = min(k, len(idx))
        order = np.lexsort((idx, d2))
        sorted_d2 = d2[order]
        cut = sorted_d2[k - 1]
        lo = int(np.searchsorted(sorted_d2, cut, side="left"))
        hi = int(np.searchsorted(sorted_d2, cut, side="right"))
        need = k - lo
        if hi - lo > need:
            ties = list(order[lo:hi])  # ascending id within equal d2
            for j in range(need):
                r = j + int(self.tie_rng.uniform() * (len(ties) - j))
                if r >= len(ties):
                    r = len(ties) - 1
                ties[j], ties[r] = ties[r], ties[j]
            sel = list(order[:lo]) + ties[:need]
        else:
            sel = order[:k]
        return [int(idx[s]) for s in sel], [float(d2[s]) for s in sel]

    def _nearest_feasible(self, ox: float, oy: float, t: float,
                          t_trip: float):
        """Closest dispatchable vehicle passing the battery check."""
        cfg = self.cfg
        idx, d2 = self._candidate_d2(ox, oy)
        if len(idx) == 0:
            return -1, 0.0
        soc = self.soc_val[idx] + self.soc_rate[idx] * (t - self.soc_t[idx])
        np.clip(soc, None, 1.0, out=soc)
        t_p = np.sqrt(d2) / cfg.speed
        ok = soc - (t_p + t_trip) * cfg.drain >= cfg.s_min
        if not ok.any():
            return -1, 0.0
        idx = idx[ok]
        d2 = d2[ok]
        j = np.lexsort((idx, d2))[0]
        return int(idx[j]), float(d2[j])

    def _nearest_site(self, x: float, y: float) -> int:
        if self.cfg.claiming:
            free = (self.occupied + self.claims) < self.posts
        else:
            free = self.occupied < self.posts
        idx = np.nonzero(free)[0]
        if len(idx) == 0:
            return -1
        dx = self.sx[idx] - x
        dy = self.sy[idx] - y
        d2 = dx * dx + dy * dy
        j = np.lexsort((idx, d2))[0]
        return int(idx[j])

    # -- event handlers ---------------------------------------------------

    def _select_vehicle(self, t: float, ox: float, oy: float,
                        t_trip: float):
        cfg = self.cfg
        if cfg.policy == POLICY_CAD:
            return self._nearest_feasible(ox, oy, t, t_trip)
        k = 1 if cfg.policy == POLICY_CD else cfg.d
        ids, d2s = self._k_nearest(ox, oy, k)
        if not ids:
            return -1, 0.0
        if cfg.policy == POLICY_CD:
            pick, pick_d2 = ids[0], d2s[0]
        else:
            pick, pick_d2, pick_soc = -1, 0.0, -1.0
            for i, dd in zip(ids, d2s):
                s = self._soc_now(i, t)
                if s > pick_soc or (s == pick_soc and i < pick):
                    pick, pick_d2, pick_soc = i, dd, s
        soc = self._soc_now(pick, t)
        t_p = math.sqrt(pick_d2) / cfg.speed
        if soc - (t_p + t_trip) * cfg.drain >= cfg.s_min:
            return pick, pick_d2
        return -1, 0.0

    def _release_from_charging_or_queue(self, i: int, t: float) -> None:
        act = self.activity[i]
        if act == CHARGING:
            s = self.site_of[i]
            self.occupied[s] -= 1
            self.version[i] += 1
            self.site_of[i] = -1
            self._promote(s, t)
        elif act == WAIT_CHG:
            self.queues[self.site_of[i]].remove(i)
            self.site_of[i] = -1

    def _promote(self, s: int, t: float) -> None:
        q = self.queues[s]
        if q:
            j = q.pop(0)
            self.occupied[s] += 1
            self.activity[j] = CHARGING
            soc = self._soc_now(j, t)
            self._set_soc(j, t, soc, self.cfg.gain)
            self.version[j] += 1
            self._push(t + (1.0 - soc) / self.cfg.gain, EV_CHARGE_FULL,
                       j, self.version[j])

    def _handle_arrival(self, t: float) -> None:
        cfg = self.cfg
        ox = self.rng.uniform() * cfg.side
        oy = self.rng.uniform() * cfg.side
        dx = self.rng.uniform() * cfg.side
        dy = self.rng.uniform() * cfg.side
        self._push(t + self.rng.exponential(cfg.lam), EV_ARRIVAL, 0, 0)
        trip_miles = math.sqrt((dx - ox) * (dx - ox) + (dy - oy) * (dy - oy))
        t_trip = trip_miles / cfg.speed
        in_window = t >= cfg.warmup
        if in_window:
            self.arrivals += 1
            self.requested_miles += trip_miles
        pick, pick_d2 = self._select_vehicle(t, ox, oy, t_trip)
        if pick < 0:
            return
        t_p = math.sqrt(pick_d2) / cfg.speed
        soc = self._soc_now(pick, t)
        self._release_from_charging_or_queue(pick, t)
        self.dispatchable[pick] = False
        self.activity[pick] = PICKUP
        self._set_soc(pick, t, soc, -cfg.drain)
        self.vx[pick] = dx
        self.vy[pick] = dy
        self._push(t + t_p, EV_PICKUP_DONE, pick, 0)
        self._push(t + t_p + t_trip, EV_DROPOFF, pick, 0)
        if in_window:
            self.served += 1
            self.pickup_sum += t_p
            self.trip_time_sum += t_trip
            self.served_miles += trip_miles

    def _handle_dropoff(self, i: int, t: float) -> None:
        cfg = self.cfg
        soc = self._soc_now(i, t)
        if soc < 0.0:
            self.soc_underflow += 1
            soc = 0.0
        if soc < cfg.s_max:
            s = self._nearest_site(self.vx[i], self.vy[i])
            if s >= 0:
                ddx = self.sx[s] - self.vx[i]
                ddy = self.sy[s] - self.vy[i]
                t_dc = math.sqrt(ddx * ddx + ddy * ddy) / cfg.speed
                self.claims[s] += 1
                self.site_of[i] = s
                self.activity[i] = DRIVE_CHG
                self._set_soc(i, t, soc, -cfg.drain)
                self.vx[i] = self.sx[s]
                self.vy[i] = self.sy[s]
                self._push(t + t_dc, EV_REACH_CHARGER, i, s)
                if t >= cfg.warmup:
                    self.dtc_sum += t_dc
                    self.dtc_count += 1
                return
        self.activity[i] = IDLE
        self._set_soc(i, t, soc, 0.0)
        self.dispatchable[i] = True

    def _handle_reach_charger(self, i: int, s: int, t: float) -> None:
        cfg = self.cfg
        self.claims[s] -= 1
        soc = self._soc_now(i, t)
        if soc < 0.0:
            self.soc_underflow += 1
            soc = 0.0
        self.dispatchable[i] = True
        if self.occupied[s] < self.posts[s]:
            self.occupied[s] += 1
            self.activity[i] = CHARGING
            self._set_soc(i, t, soc, cfg.gain)
            self.version[i] += 1
            self._push(t + (1.0 - soc) / cfg.gain, EV_CHARGE_FULL, i,
                       self.version[i])
        else:
            self.activity[i] = WAIT_CHG
            self._set_soc(i, t, soc, 0.0)
            self.queues[s].append(i)

    def _handle_charge_full(self, i: int, ver: int, t: float) -> None:
        if ver != self.version[i] or self.activity[i] != CHARGING:
            return
        s = self.site_of[i]
        self.occupied[s] -= 1
        self.site_of[i] = -1
        self.activity[i] = IDLE
        self._set_soc(i, t, 1.0, 0.0)
        self._promote(s, t)

    # -- main loop ---------------------------------------------------------

    def run(self) -> dict:
        cfg = self.cfg
        if cfg.lam > 0:
            self._push(self.rng.exponential(cfg.lam), EV_ARRIVAL, 0, 0)
        next_sample = 0.0
        while self.events:
            t, _, kind, a, b = heappop(self.events)
            if t > cfg.horizon:
                break
            while next_sample <= t:
                self._sample(next_sample)
                next_sample += cfg.sample_every
            if cfg.trace:
                self.trace.append((t, kind, a, b))
            if kind == EV_ARRIVAL:
                self._handle_arrival(t)
            elif kind == EV_PICKUP_DONE:
                if self.activity[a] == PICKUP:
                    self.activity[a] = DRIVE_CUST
            elif kind == EV_DROPOFF:
                self._handle_dropoff(a, t)
            elif kind == EV_REACH_CHARGER:
                self._handle_reach_charger(a, b, t)
            elif kind == EV_CHARGE_FULL:
                self._handle_charge_full(a, b, t)
        while next_sample <= cfg.horizon:
            self._sample(next_sample)
            next_sample += cfg.sample_every
        return self._metrics()

    def _metrics(self) -> dict:
        served = self.served
        arrivals = self.arrivals
        return {
            "service_level": served / arrivals if arrivals else 1.0,
            "avg_pickup_min": self.pickup_sum / served if served else 0.0,
            "avg_dtc_min":
                self.dtc_sum / self.dtc_count if self.dtc_count else 0.0,
            "workload_served":
                self.served_miles / self.requested_miles
                if self.requested_miles else 1.0,
            "t_r_fulfilled_min":
                self.trip_time_sum / served if served else 0.0,
            "effective_arrivals": arrivals,
            "served": served,
            "soc_underflow": self.soc_underflow,
            "ts_time": np.asarray(self.ts_time),
            "ts_counts": np.asarray(self.ts_counts, dtype=np.int64),
            "ts_mean_soc": np.asarray(self.ts_soc),
            "trace": self.trace,
        }


def run_engine(cfg: EngineConfig) -> dict:
    return Engine(cfg).run()
