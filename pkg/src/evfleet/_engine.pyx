# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled twin of evfleet.engine_py.

Same event semantics, same splitmix64 streams, same tie-breaking
((time, sequence) for events, (distance^2, id) for charger and feasibility
queries, a seeded draw for equal-distance dispatch candidates), so a
(config, seed) pair replays identically on either engine. Spatial queries
use bucket grids with ring expansion instead of vectorized scans; both
orderings are exact, so the selected vehicles match.
"""

from libc.math cimport log, sqrt
from libc.stdlib cimport free, malloc, realloc

import numpy as np

DEF EV_ARRIVAL = 0
DEF EV_PICKUP_DONE = 1
DEF EV_DROPOFF = 2
DEF EV_REACH_CHARGER = 3
DEF EV_CHARGE_FULL = 4

DEF IDLE = 0
DEF PICKUP = 1
DEF DRIVE_CUST = 2
DEF DRIVE_CHG = 3
DEF WAIT_CHG = 4
DEF CHARGING = 5

DEF POLICY_CD = 0
DEF POLICY_CAD = 1
DEF POLICY_POD = 2

DEF MAX_POOL = 64

cdef double TWO53 = 1.0 / 9007199254740992.0


cdef inline unsigned long long sm64_next(unsigned long long *state) nogil:
    cdef unsigned long long z
    state[0] = state[0] + <unsigned long long>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double sm64_uniform(unsigned long long *state) nogil:
    return <double>(sm64_next(state) >> 11) * TWO53


cdef class CEngine:
    cdef unsigned long long rng
    cdef unsigned long long tie_rng
    cdef long long *tie_buf
    cdef long long tie_cap
    # config
    cdef long long n, m, m_p, n_sites, policy, d
    cdef double lam, side, speed, drain, gain, s_min, s_max
    cdef double horizon, warmup, sample_every
    cdef bint claiming
    # vehicles
    cdef double[::1] vx, vy, soc_val, soc_rate, soc_t
    cdef long long[::1] activity, version, site_of
    # chargers
    cdef double[::1] sx, sy
    cdef long long[::1] posts, occupied, claims
    cdef long long[::1] q_head, q_tail, q_next, q_prev
    # vehicle grid
    cdef long long ncv
    cdef double csv
    cdef long long[::1] g_head, g_next, g_prev, g_cell
    # charger grid (static CSR)
    cdef long long ncs
    cdef double css
    cdef long long[::1] s_start, s_items
    # event heap
    cdef double *ev_t
    cdef long long *ev_seq
    cdef long long *ev_kind
    cdef long long *ev_a
    cdef long long *ev_b
    cdef long long hsize, hcap, seq
    # metrics
    cdef bint trace_on
    cdef list trace
    cdef long long arrivals, served, dtc_count, soc_underflow
    cdef double pickup_sum, dtc_sum, trip_time_sum
    cdef double requested_miles, served_miles
    cdef list ts_time, ts_counts, ts_soc

    def __cinit__(self):
        self.ev_t = NULL
        self.ev_seq = NULL
        self.ev_kind = NULL
        self.ev_a = NULL
        self.ev_b = NULL
        self.tie_buf = NULL

    def __dealloc__(self):
        free(self.tie_buf)
        free(self.ev_t)
        free(self.ev_seq)
        free(self.ev_kind)
        free(self.ev_a)
        free(self.ev_b)

    def __init__(self, cfg):
        cdef long long i, s
        self.n = cfg.n
        self.m = cfg.m
        self.m_p = cfg.m_p
        self.lam = cfg.lam
        self.policy = cfg.policy
        self.d = cfg.d
        if self.d > MAX_POOL:
            raise ValueError("d too large for the compiled engine")
        self.side = cfg.side
        self.speed = cfg.speed
        self.drain = cfg.drain
        self.gain = cfg.gain
        self.s_min = cfg.s_min
        self.s_max = cfg.s_max
        self.horizon = cfg.horizon
        self.warmup = cfg.warmup
        self.sample_every = cfg.sample_every
        self.claiming = cfg.claiming
        self.rng = <unsigned long long>(cfg.seed & 0xFFFFFFFFFFFFFFFF)
        # separate stream for dispatch tie resolution so the arrival
        # draws stay aligned whether or not ties occur
        self.tie_rng = <unsigned long long>(
            (cfg.seed ^ 0xC3A5C85C97CB3127) & 0xFFFFFFFFFFFFFFFF)
        self.tie_cap = 64
        self.tie_buf = <long long *>malloc(self.tie_cap * sizeof(long long))
        self.n_sites = self.m // self.m_p
        if self.n_sites < 1:
            raise ValueError("need at least one charger site (m >= m_p)")
        cdef long long n = self.n, S = self.n_sites
        self.posts = np.full(S, self.m_p, dtype=np.int64)
        self.posts[S - 1] += self.m - S * self.m_p
        self.sx = np.empty(S)
        self.sy = np.empty(S)
        for s in range(S):
            self.sx[s] = sm64_uniform(&self.rng) * self.side
            self.sy[s] = sm64_uniform(&self.rng) * self.side
        self.vx = np.empty(n)
        self.vy = np.empty(n)
        for i in range(n):
            self.vx[i] = sm64_uniform(&self.rng) * self.side
            self.vy[i] = sm64_uniform(&self.rng) * self.side
        self.soc_val = np.empty(n)
        for i in range(n):
            self.soc_val[i] = 0.4 + 0.2 * sm64_uniform(&self.rng)
        self.soc_rate = np.zeros(n)
        self.soc_t = np.zeros(n)
        self.activity = np.zeros(n, dtype=np.int64)
        self.version = np.zeros(n, dtype=np.int64)
        self.site_of = np.full(n, -1, dtype=np.int64)
        self.occupied = np.zeros(S, dtype=np.int64)
        self.claims = np.zeros(S, dtype=np.int64)
        self.q_head = np.full(S, -1, dtype=np.int64)
        self.q_tail = np.full(S, -1, dtype=np.int64)
        self.q_next = np.full(n, -1, dtype=np.int64)
        self.q_prev = np.full(n, -1, dtype=np.int64)
        # vehicle grid
        self.ncv = <long long>sqrt(<double>n)
        if self.ncv < 1:
            self.ncv = 1
        self.csv = self.side / <double>self.ncv
        self.g_head = np.full(self.ncv * self.ncv, -1, dtype=np.int64)
        self.g_next = np.full(n, -1, dtype=np.int64)
        self.g_prev = np.full(n, -1, dtype=np.int64)
        self.g_cell = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            self.grid_insert(i)
        # charger grid
        self.ncs = <long long>sqrt(<double>S)
        if self.ncs < 1:
            self.ncs = 1
        self.css = self.side / <double>self.ncs
        counts = np.zeros(self.ncs * self.ncs + 1, dtype=np.int64)
        cells = np.empty(S, dtype=np.int64)
        for s in range(S):
            cells[s] = self.site_cell(self.sx[s], self.sy[s])
            counts[cells[s] + 1] += 1
        start = np.cumsum(counts)
        items = np.empty(S, dtype=np.int64)
        fill = start[:-1].copy()
        for s in range(S):
            items[fill[cells[s]]] = s
            fill[cells[s]] += 1
        self.s_start = start
        self.s_items = items
        # heap
        self.hcap = 1024
        self.hsize = 0
        self.seq = 0
        self.ev_t = <double *>malloc(self.hcap * sizeof(double))
        self.ev_seq = <long long *>malloc(self.hcap * sizeof(long long))
        self.ev_kind = <long long *>malloc(self.hcap * sizeof(long long))
        self.ev_a = <long long *>malloc(self.hcap * sizeof(long long))
        self.ev_b = <long long *>malloc(self.hcap * sizeof(long long))
        if (self.ev_t is NULL or self.ev_seq is NULL or
                self.ev_kind is NULL or self.ev_a is NULL or
                self.ev_b is NULL):
            raise MemoryError()
        self.arrivals = 0
        self.served = 0
        self.dtc_count = 0
        self.soc_underflow = 0
        self.pickup_sum = 0.0
        self.dtc_sum = 0.0
        self.trip_time_sum = 0.0
        self.requested_miles = 0.0
        self.served_miles = 0.0
        self.ts_time = []
        self.ts_counts = []
        self.ts_soc = []
        self.trace_on = getattr(cfg, "trace", False)
        self.trace = []

    # -- grids -------------------------------------------------------------

    cdef inline long long vehicle_cell(self, double x, double y) nogil:
        cdef long long cx = <long long>(x / self.csv)
        cdef long long cy = <long long>(y / self.csv)
        if cx > self.ncv - 1:
            cx = self.ncv - 1
        if cy > self.ncv - 1:
            cy = self.ncv - 1
        if cx < 0:
            cx = 0
        if cy < 0:
            cy = 0
        return cx * self.ncv + cy

    cdef inline long long site_cell(self, double x, double y) nogil:
        cdef long long cx = <long long>(x / self.css)
        cdef long long cy = <long long>(y / self.css)
        if cx > self.ncs - 1:
            cx = self.ncs - 1
        if cy > self.ncs - 1:
            cy = self.ncs - 1
        if cx < 0:
            cx = 0
        if cy < 0:
            cy = 0
        return cx * self.ncs + cy

    cdef void grid_insert(self, long long i) nogil:
        cdef long long c = self.vehicle_cell(self.vx[i], self.vy[i])
        cdef long long h = self.g_head[c]
        self.g_cell[i] = c
        self.g_prev[i] = -1
        self.g_next[i] = h
        if h >= 0:
            self.g_prev[h] = i
        self.g_head[c] = i

    cdef void grid_remove(self, long long i) nogil:
        cdef long long p = self.g_prev[i], nx = self.g_next[i]
        if p >= 0:
            self.g_next[p] = nx
        else:
            self.g_head[self.g_cell[i]] = nx
        if nx >= 0:
            self.g_prev[nx] = p
        self.g_cell[i] = -1
        self.g_prev[i] = -1
        self.g_next[i] = -1

    # -- heap ----------------------------------------------------------------

    cdef void hpush(self, double t, long long kind, long long a,
                    long long b):
        cdef long long i, parent, cap
        if self.hsize == self.hcap:
            cap = self.hcap * 2
            self.ev_t = <double *>realloc(self.ev_t, cap * sizeof(double))
            self.ev_seq = <long long *>realloc(
                self.ev_seq, cap * sizeof(long long))
            self.ev_kind = <long long *>realloc(
                self.ev_kind, cap * sizeof(long long))
            self.ev_a = <long long *>realloc(
                self.ev_a, cap * sizeof(long long))
            self.ev_b = <long long *>realloc(
                self.ev_b, cap * sizeof(long long))
            self.hcap = cap
        i = self.hsize
        self.hsize += 1
        self.ev_t[i] = t
        self.ev_seq[i] = self.seq
        self.ev_kind[i] = kind
        self.ev_a[i] = a
        self.ev_b[i] = b
        self.seq += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self._hless(i, parent):
                self._hswap(i, parent)
                i = parent
            else:
                break

    cdef inline bint _hless(self, long long i, long long j) nogil:
        if self.ev_t[i] != self.ev_t[j]:
            return self.ev_t[i] < self.ev_t[j]
        return self.ev_seq[i] < self.ev_seq[j]

    cdef inline void _hswap(self, long long i, long long j) nogil:
        cdef double td = self.ev_t[i]
        cdef long long tl
        self.ev_t[i] = self.ev_t[j]
        self.ev_t[j] = td
        tl = self.ev_seq[i]; self.ev_seq[i] = self.ev_seq[j]; self.ev_seq[j] = tl
        tl = self.ev_kind[i]; self.ev_kind[i] = self.ev_kind[j]; self.ev_kind[j] = tl
        tl = self.ev_a[i]; self.ev_a[i] = self.ev_a[j]; self.ev_a[j] = tl
        tl = self.ev_b[i]; self.ev_b[i] = self.ev_b[j]; self.ev_b[j] = tl

    cdef void hpop(self) nogil:
        cdef long long i = 0, left, right, small
        self.hsize -= 1
        if self.hsize == 0:
            return
        self.ev_t[0] = self.ev_t[self.hsize]
        self.ev_seq[0] = self.ev_seq[self.hsize]
        self.ev_kind[0] = self.ev_kind[self.hsize]
        self.ev_a[0] = self.ev_a[self.hsize]
        self.ev_b[0] = self.ev_b[self.hsize]
        while True:
            left = 2 * i + 1
            right = left + 1
            small = i
            if left < self.hsize and self._hless(left, small):
                small = left
            if right < self.hsize and self._hless(right, small):
                small = right
            if small == i:
                break
            self._hswap(i, small)
            i = small

    # -- SoC ----------------------------------------------------------------

    cdef inline double soc_now(self, long long i, double t) nogil:
        cdef double s = self.soc_val[i] + self.soc_rate[i] * (t - self.soc_t[i])
        if s > 1.0:
            s = 1.0
        return s

    cdef inline void set_soc(self, long long i, double t, double value,
                             double rate) nogil:
        self.soc_val[i] = value
        self.soc_rate[i] = rate
        self.soc_t[i] = t

    # -- queries --------------------------------------------------------------

    cdef void _scan_cell_v(self, long long c, long long k,
                           bint feasible_only, double t, double t_trip,
                           double ox, double oy, long long *out_ids,
                           double *out_d2, long long *count) nogil:
        cdef long long i = self.g_head[c], pos, cnt
        cdef double dx, dy, d2, s, t_p
        while i >= 0:
            dx = self.vx[i] - ox
            dy = self.vy[i] - oy
            d2 = dx * dx + dy * dy
            if feasible_only:
                s = self.soc_now(i, t)
                t_p = sqrt(d2) / self.speed
                if not (s - (t_p + t_trip) * self.drain >= self.s_min):
                    i = self.g_next[i]
                    continue
            cnt = count[0]
            if cnt < k or d2 < out_d2[cnt - 1] or \
                    (d2 == out_d2[cnt - 1] and i < out_ids[cnt - 1]):
                pos = cnt if cnt < k else k - 1
                while pos > 0 and (
                        out_d2[pos - 1] > d2 or
                        (out_d2[pos - 1] == d2 and out_ids[pos - 1] > i)):
                    out_d2[pos] = out_d2[pos - 1]
                    out_ids[pos] = out_ids[pos - 1]
                    pos -= 1
                out_d2[pos] = d2
                out_ids[pos] = i
                if cnt < k:
                    count[0] = cnt + 1
            i = self.g_next[i]

    cdef long long k_nearest(self, double ox, double oy, long long k,
                             bint feasible_only, double t, double t_trip,
                             long long *out_ids, double *out_d2) nogil:
        """Up to k dispatchable vehicles by (d2, id); optionally only the
        battery-feasible ones. Returns the count."""
        cdef long long count = 0
        cdef long long nc = self.ncv
        cdef long long cqx = <long long>(ox / self.csv)
        cdef long long cqy = <long long>(oy / self.csv)
        cdef long long rho, bx, by, x0, x1, y0, y1, xlo, xhi, ylo, yhi
        cdef double bound
        if cqx > nc - 1:
            cqx = nc - 1
        if cqy > nc - 1:
            cqy = nc - 1
        if cqx < 0:
            cqx = 0
        if cqy < 0:
            cqy = 0
        for rho in range(0, nc + 1):
            if count == k:
                bound = (<double>(rho - 1)) * self.csv
                if out_d2[count - 1] < bound * bound:
                    break
            x0 = cqx - rho
            x1 = cqx + rho
            y0 = cqy - rho
            y1 = cqy + rho
            xlo = x0 if x0 > 0 else 0
            xhi = x1 if x1 < nc - 1 else nc - 1
            if rho == 0:
                self._scan_cell_v(cqx * nc + cqy, k, feasible_only, t,
                                  t_trip, ox, oy, out_ids, out_d2, &count)
                continue
            for bx in range(xlo, xhi + 1):
                if y0 >= 0:
                    self._scan_cell_v(bx * nc + y0, k, feasible_only, t,
                                      t_trip, ox, oy, out_ids, out_d2,
                                      &count)
                if y1 <= nc - 1:
                    self._scan_cell_v(bx * nc + y1, k, feasible_only, t,
                                      t_trip, ox, oy, out_ids, out_d2,
                                      &count)
            ylo = y0 + 1 if y0 + 1 > 0 else 0
            yhi = y1 - 1 if y1 - 1 < nc - 1 else nc - 1
            for by in range(ylo, yhi + 1):
                if x0 >= 0:
                    self._scan_cell_v(x0 * nc + by, k, feasible_only, t,
                                      t_trip, ox, oy, out_ids, out_d2,
                                      &count)
                if x1 <= nc - 1:
                    self._scan_cell_v(x1 * nc + by, k, feasible_only, t,
                                      t_trip, ox, oy, out_ids, out_d2,
                                      &count)
        return count

    cdef long long _collect_ties(self, double ox, double oy,
                                 double cut) nogil:
        """All dispatchable vehicles at squared distance exactly `cut`,
        ascending id, into tie_buf. Returns the count."""
        cdef long long nc = self.ncv
        cdef double radius = sqrt(cut)
        cdef long long xlo = <long long>((ox - radius) / self.csv)
        cdef long long xhi = <long long>((ox + radius) / self.csv)
        cdef long long ylo = <long long>((oy - radius) / self.csv)
        cdef long long yhi = <long long>((oy + radius) / self.csv)
        cdef long long cx, cy, i, count = 0, pos
        cdef double dx, dy
        if xlo < 0:
            xlo = 0
        if ylo < 0:
            ylo = 0
        if xhi > nc - 1:
            xhi = nc - 1
        if yhi > nc - 1:
            yhi = nc - 1
        for cx in range(xlo, xhi + 1):
            for cy in range(ylo, yhi + 1):
                i = self.g_head[cx * nc + cy]
                while i >= 0:
                    dx = self.vx[i] - ox
                    dy = self.vy[i] - oy
                    if dx * dx + dy * dy == cut:
                        if count == self.tie_cap:
                            self.tie_cap *= 2
                            self.tie_buf = <long long *>realloc(
                                self.tie_buf,
                                self.tie_cap * sizeof(long long))
                        pos = count
                        while pos > 0 and self.tie_buf[pos - 1] > i:
                            self.tie_buf[pos] = self.tie_buf[pos - 1]
                            pos -= 1
                        self.tie_buf[pos] = i
                        count += 1
                    i = self.g_next[i]
        return count

    cdef long long pool_dispatch(self, double ox, double oy, long long k,
                                 double t, long long *out_ids,
                                 double *out_d2) nogil:
        """k nearest dispatchable vehicles for CD/Po-d selection.

        Vehicles strictly closer than the k-th distance always make the
        pool; slots left at the boundary distance are filled by a seeded
        draw among everything tied there (co-located vehicles at a charger
        site would otherwise shadow each other deterministically).
        """
        cdef long long count = self.k_nearest(ox, oy, k, False, t, 0.0,
                                              out_ids, out_d2)
        if count < k:
            return count
        cdef double cut = out_d2[count - 1]
        cdef long long lo = 0
        while out_d2[lo] != cut:
            lo += 1
        cdef long long need = count - lo
        cdef long long nties = self._collect_ties(ox, oy, cut)
        if nties <= need:
            return count
        cdef long long j, r, tmp
        for j in range(need):
            r = j + <long long>(
                sm64_uniform(&self.tie_rng) * <double>(nties - j))
            if r >= nties:
                r = nties - 1
            tmp = self.tie_buf[j]
            self.tie_buf[j] = self.tie_buf[r]
            self.tie_buf[r] = tmp
        for j in range(need):
            out_ids[lo + j] = self.tie_buf[j]
            out_d2[lo + j] = cut
        return count

    cdef void _scan_cell_s(self, long long c, double x, double y,
                           long long *best, double *best_d2) nogil:
        cdef long long j, s, cap
        cdef double dx, dy, d2
        for j in range(self.s_start[c], self.s_start[c + 1]):
            s = self.s_items[j]
            cap = self.occupied[s]
            if self.claiming:
                cap += self.claims[s]
            if cap >= self.posts[s]:
                continue
            dx = self.sx[s] - x
            dy = self.sy[s] - y
            d2 = dx * dx + dy * dy
            if best[0] < 0 or d2 < best_d2[0] or \
                    (d2 == best_d2[0] and s < best[0]):
                best[0] = s
                best_d2[0] = d2

    cdef long long nearest_site(self, double x, double y) nogil:
        cdef long long best = -1
        cdef double best_d2 = 0.0
        cdef long long nc = self.ncs
        cdef long long cqx = <long long>(x / self.css)
        cdef long long cqy = <long long>(y / self.css)
        cdef long long rho, bx, by, x0, x1, y0, y1, xlo, xhi, ylo, yhi
        cdef double bound
        if cqx > nc - 1:
            cqx = nc - 1
        if cqy > nc - 1:
            cqy = nc - 1
        if cqx < 0:
            cqx = 0
        if cqy < 0:
            cqy = 0
        for rho in range(0, nc + 1):
            if best >= 0:
                bound = (<double>(rho - 1)) * self.css
                if best_d2 < bound * bound:
                    break
            x0 = cqx - rho
            x1 = cqx + rho
            y0 = cqy - rho
            y1 = cqy + rho
            xlo = x0 if x0 > 0 else 0
            xhi = x1 if x1 < nc - 1 else nc - 1
            if rho == 0:
                self._scan_cell_s(cqx * nc + cqy, x, y, &best, &best_d2)
                continue
            for bx in range(xlo, xhi + 1):
                if y0 >= 0:
                    self._scan_cell_s(bx * nc + y0, x, y, &best, &best_d2)
                if y1 <= nc - 1:
                    self._scan_cell_s(bx * nc + y1, x, y, &best, &best_d2)
            ylo = y0 + 1 if y0 + 1 > 0 else 0
            yhi = y1 - 1 if y1 - 1 < nc - 1 else nc - 1
            for by in range(ylo, yhi + 1):
                if x0 >= 0:
                    self._scan_cell_s(x0 * nc + by, x, y, &best, &best_d2)
                if x1 <= nc - 1:
                    self._scan_cell_s(x1 * nc + by, x, y, &best, &best_d2)
        return best

    # -- charger queues ------------------------------------------------------

    cdef void queue_append(self, long long s, long long i) nogil:
        cdef long long tail = self.q_tail[s]
        self.q_next[i] = -1
        self.q_prev[i] = tail
        if tail >= 0:
            self.q_next[tail] = i
        else:
            self.q_head[s] = i
        self.q_tail[s] = i

    cdef void queue_remove(self, long long s, long long i) nogil:
        cdef long long p = self.q_prev[i], nx = self.q_next[i]
        if p >= 0:
            self.q_next[p] = nx
        else:
            self.q_head[s] = nx
        if nx >= 0:
            self.q_prev[nx] = p
        else:
            self.q_tail[s] = p
        self.q_next[i] = -1
        self.q_prev[i] = -1

    # -- event handlers --------------------------------------------------------

    cdef void promote(self, long long s, double t):
        cdef long long j = self.q_head[s]
        cdef double soc
        if j >= 0:
            self.queue_remove(s, j)
            self.occupied[s] += 1
            self.activity[j] = CHARGING
            soc = self.soc_now(j, t)
            self.set_soc(j, t, soc, self.gain)
            self.version[j] += 1
            self.hpush(t + (1.0 - soc) / self.gain, EV_CHARGE_FULL, j,
                       self.version[j])

    cdef void release_from_charging_or_queue(self, long long i, double t):
        cdef long long act = self.activity[i], s
        if act == CHARGING:
            s = self.site_of[i]
            self.occupied[s] -= 1
            self.version[i] += 1
            self.site_of[i] = -1
            self.promote(s, t)
        elif act == WAIT_CHG:
            self.queue_remove(self.site_of[i], i)
            self.site_of[i] = -1

    cdef void handle_arrival(self, double t):
        cdef double ox = sm64_uniform(&self.rng) * self.side
        cdef double oy = sm64_uniform(&self.rng) * self.side
        cdef double dx = sm64_uniform(&self.rng) * self.side
        cdef double dy = sm64_uniform(&self.rng) * self.side
        self.hpush(
            t - log(1.0 - sm64_uniform(&self.rng)) / self.lam,
            EV_ARRIVAL, 0, 0)
        cdef double trip_miles = sqrt(
            (dx - ox) * (dx - ox) + (dy - oy) * (dy - oy))
        cdef double t_trip = trip_miles / self.speed
        cdef bint in_window = t >= self.warmup
        if in_window:
            self.arrivals += 1
            self.requested_miles += trip_miles
        cdef long long ids[MAX_POOL]
        cdef double d2s[MAX_POOL]
        cdef long long count, k, pick, i, j
        cdef double pick_d2, pick_soc, s, t_p, soc
        if self.policy == POLICY_CAD:
            count = self.k_nearest(ox, oy, 1, True, t, t_trip, ids, d2s)
            if count == 0:
                return
            pick = ids[0]
            pick_d2 = d2s[0]
        else:
            k = 1 if self.policy == POLICY_CD else self.d
            count = self.pool_dispatch(ox, oy, k, t, ids, d2s)
            if count == 0:
                return
            if self.policy == POLICY_CD:
                pick = ids[0]
                pick_d2 = d2s[0]
            else:
                pick = -1
                pick_d2 = 0.0
                pick_soc = -1.0
                for j in range(count):
                    i = ids[j]
                    s = self.soc_now(i, t)
                    if s > pick_soc or (s == pick_soc and i < pick):
                        pick = i
                        pick_d2 = d2s[j]
                        pick_soc = s
            soc = self.soc_now(pick, t)
            t_p = sqrt(pick_d2) / self.speed
            if not (soc - (t_p + t_trip) * self.drain >= self.s_min):
                return
        t_p = sqrt(pick_d2) / self.speed
        soc = self.soc_now(pick, t)
        self.release_from_charging_or_queue(pick, t)
        self.grid_remove(pick)
        self.activity[pick] = PICKUP
        self.set_soc(pick, t, soc, -self.drain)
        self.vx[pick] = dx
        self.vy[pick] = dy
        self.hpush(t + t_p, EV_PICKUP_DONE, pick, 0)
        self.hpush(t + t_p + t_trip, EV_DROPOFF, pick, 0)
        if in_window:
            self.served += 1
            self.pickup_sum += t_p
            self.trip_time_sum += t_trip
            self.served_miles += trip_miles

    cdef void handle_dropoff(self, long long i, double t):
        cdef double soc = self.soc_now(i, t)
        cdef long long s
        cdef double ddx, ddy, t_dc
        if soc < 0.0:
            self.soc_underflow += 1
            soc = 0.0
        if soc < self.s_max:
            s = self.nearest_site(self.vx[i], self.vy[i])
            if s >= 0:
                ddx = self.sx[s] - self.vx[i]
                ddy = self.sy[s] - self.vy[i]
                t_dc = sqrt(ddx * ddx + ddy * ddy) / self.speed
                self.claims[s] += 1
                self.site_of[i] = s
                self.activity[i] = DRIVE_CHG
                self.set_soc(i, t, soc, -self.drain)
                self.vx[i] = self.sx[s]
                self.vy[i] = self.sy[s]
                self.hpush(t + t_dc, EV_REACH_CHARGER, i, s)
                if t >= self.warmup:
                    self.dtc_sum += t_dc
                    self.dtc_count += 1
                return
        self.activity[i] = IDLE
        self.set_soc(i, t, soc, 0.0)
        self.grid_insert(i)

    cdef void handle_reach_charger(self, long long i, long long s, double t):
        cdef double soc
        self.claims[s] -= 1
        soc = self.soc_now(i, t)
        if soc < 0.0:
            self.soc_underflow += 1
            soc = 0.0
        self.grid_insert(i)
        if self.occupied[s] < self.posts[s]:
            self.occupied[s] += 1
            self.activity[i] = CHARGING
            self.set_soc(i, t, soc, self.gain)
            self.version[i] += 1
            self.hpush(t + (1.0 - soc) / self.gain, EV_CHARGE_FULL, i,
                       self.version[i])
        else:
            self.activity[i] = WAIT_CHG
            self.set_soc(i, t, soc, 0.0)
            self.queue_append(s, i)

    cdef void handle_charge_full(self, long long i, long long ver, double t):
        cdef long long s
        if ver != self.version[i] or self.activity[i] != CHARGING:
            return
        s = self.site_of[i]
        self.occupied[s] -= 1
        self.site_of[i] = -1
        self.activity[i] = IDLE
        self.set_soc(i, t, 1.0, 0.0)
        self.promote(s, t)

    cdef void sample(self, double t):
        cdef long long counts[6]
        cdef long long i, j
        cdef double soc_sum = 0.0, s
        for j in range(6):
            counts[j] = 0
        for i in range(self.n):
            counts[self.activity[i]] += 1
            s = self.soc_val[i] + self.soc_rate[i] * (t - self.soc_t[i])
            if s > 1.0:
                s = 1.0
            if s < 0.0:
                s = 0.0
            soc_sum += s
        self.ts_time.append(t)
        self.ts_counts.append([counts[0], counts[1], counts[2], counts[3],
                               counts[4], counts[5]])
        self.ts_soc.append(soc_sum / <double>self.n)

    def debug_state(self):
        return {
            "vx": np.asarray(self.vx).copy(),
            "vy": np.asarray(self.vy).copy(),
            "soc": np.asarray(self.soc_val).copy(),
            "sx": np.asarray(self.sx).copy(),
            "sy": np.asarray(self.sy).copy(),
            "activity": np.asarray(self.activity).copy(),
        }

    def debug_k_nearest(self, double ox, double oy, long long k,
                        bint feasible_only=False, double t=0.0,
                        double t_trip=0.0):
        cdef long long ids[MAX_POOL]
        cdef double d2s[MAX_POOL]
        cdef long long cnt, j
        if k > MAX_POOL:
            raise ValueError("k too large")
        cnt = self.k_nearest(ox, oy, k, feasible_only, t, t_trip, ids, d2s)
        return [(ids[j], d2s[j]) for j in range(cnt)]

    def debug_nearest_site(self, double x, double y):
        return self.nearest_site(x, y)

    def run(self):
        cdef double t, next_sample = 0.0
        cdef long long kind, a, b
        if self.lam > 0:
            self.hpush(-log(1.0 - sm64_uniform(&self.rng)) / self.lam,
                       EV_ARRIVAL, 0, 0)
        while self.hsize > 0:
            t = self.ev_t[0]
            kind = self.ev_kind[0]
            a = self.ev_a[0]
            b = self.ev_b[0]
            self.hpop()
            if t > self.horizon:
                break
            while next_sample <= t:
                self.sample(next_sample)
                next_sample += self.sample_every
            if self.trace_on:
                self.trace.append((t, kind, a, b))
            if kind == EV_ARRIVAL:
                self.handle_arrival(t)
            elif kind == EV_PICKUP_DONE:
                if self.activity[a] == PICKUP:
                    self.activity[a] = DRIVE_CUST
            elif kind == EV_DROPOFF:
                self.handle_dropoff(a, t)
            elif kind == EV_REACH_CHARGER:
                self.handle_reach_charger(a, b, t)
            elif kind == EV_CHARGE_FULL:
                self.handle_charge_full(a, b, t)
        while next_sample <= self.horizon:
            self.sample(next_sample)
            next_sample += self.sample_every
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


def run_engine(cfg):
    return CEngine(cfg).run()
