"""Geometry of the square service region.

A uniform bucket-grid index over points with ranked nearest queries.
Results are defined to match a brute-force scan exactly: candidates are
ordered by (squared Euclidean distance, id), so ties resolve to the
smaller id. Distances are plain Euclidean with no wraparound.
"""

from __future__ import annotations

import math
from bisect import insort

import numpy as np


class SpatialIndex:
    """Grid of square buckets with ring-expansion search.

    Bucket side defaults to region_side / sqrt(expected population), the
    density-matched choice for uniform points.
    """

    def __init__(self, region_side: float, expected_population: int = 64,
                 cell_size: float | None = None):
        if region_side <= 0:
            raise ValueError("region_side must be positive")
        if cell_size is None:
            cell_size = region_side / max(
                1.0, math.sqrt(max(1, expected_population)))
        self.region_side = float(region_side)
        self.cell_size = float(cell_size)
        self.ncells = max(1, int(math.ceil(region_side / cell_size)))
        self._cells: dict[tuple[int, int], list[int]] = {}
        self._pos: dict[int, tuple[float, float]] = {}

    def __len__(self) -> int:
        return len(self._pos)

    def __contains__(self, ident: int) -> bool:
        return ident in self._pos

    def position(self, ident: int) -> tuple[float, float]:
        return self._pos[ident]

    def _cell_of(self, x: float, y: float) -> tuple[int, int]:
        cx = min(self.ncells - 1, max(0, int(x / self.cell_size)))
        cy = min(self.ncells - 1, max(0, int(y / self.cell_size)))
        return cx, cy

    def insert(self, ident: int, x: float, y: float) -> None:
        if ident in self._pos:
            raise KeyError(f"id {ident} already present")
        self._pos[ident] = (x, y)
        self._cells.setdefault(self._cell_of(x, y), []).append(ident)

    def remove(self, ident: int) -> None:
        x, y = self._pos.pop(ident)
        cell = self._cell_of(x, y)
        bucket = self._cells[cell]
        bucket.remove(ident)
        if not bucket:
            del self._cells[cell]

    def move(self, ident: int, x: float, y: float) -> None:
        self.remove(ident)
        self.insert(ident, x, y)

    def k_nearest(self, x: float, y: float, k: int,
                  predicate=None) -> list[int]:
        """Up to k ids passing the predicate, by ascending distance.

        Ring expansion over grid buckets; a bucket at Chebyshev ring rho
        only holds points at distance >= (rho - 1) * cell_size, so the
        search stops once the kth-best candidate beats every unvisited
        ring.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        cx, cy = self._cell_of(x, y)
        nc = self.ncells
        cs = self.cell_size
        best: list[tuple[float, int]] = []
        max_ring = nc  # all buckets visited by then
        for rho in range(0, max_ring + 1):
            if len(best) == k and best[-1][0] < ((rho - 1) * cs) ** 2:
                break
            for bx, by in self._ring_cells(cx, cy, rho):
                for ident in self._cells.get((bx, by), ()):
                    if predicate is not None and not predicate(ident):
                        continue
                    px, py = self._pos[ident]
                    d2 = (px - x) ** 2 + (py - y) ** 2
                    entry = (d2, ident)
                    if len(best) < k:
                        insort(best, entry)
                    elif entry < best[-1]:
                        insort(best, entry)
                        best.pop()
        return [ident for _, ident in best]

    def nearest(self, x: float, y: float, predicate=None) -> int | None:
        found = self.k_nearest(x, y, 1, predicate)
        return found[0] if found else None

    def _ring_cells(self, cx: int, cy: int, rho: int):
        nc = self.ncells
        if rho == 0:
            if 0 <= cx < nc and 0 <= cy < nc:
                yield cx, cy
            return
        x0, x1 = cx - rho, cx + rho
        y0, y1 = cy - rho, cy + rho
        for bx in range(max(0, x0), min(nc - 1, x1) + 1):
            if 0 <= y0 < nc:
                yield bx, y0
            if 0 <= y1 < nc:
                yield bx, y1
        for by in range(max(0, y0 + 1), min(nc - 1, y1 - 1) + 1):
            if 0 <= x0 < nc:
                yield x0, by
            if 0 <= x1 < nc:
                yield x1, by


def nearest_available_charger(index: SpatialIndex, x: float, y: float,
                              available) -> int | None:
    """Closest charger id for which available(id) is truthy, or None."""
    return index.nearest(x, y, predicate=available)


def estimate_nearest_scaling(rng_seed: int, k_values: list[int], d: int = 1,
                             trials: int = 10_000,
                             region_side: float = 10.0) -> dict:
    """Monte-Carlo law of the d-th nearest of k uniform points.

    For each k, drop k uniform points in the square and record the
    distance from the region center to the d-th closest; the log-log
    slope of the mean against k is ~ -1/2.
    """
    if any(k < d for k in k_values):
        raise ValueError("every k must be >= d")
    rng = np.random.default_rng(rng_seed)
    cx = cy = region_side / 2.0
    means = {}
    for k in k_values:
        chunk = max(1, int(2e7) // max(1, k))
        remaining = trials
        total = 0.0
        while remaining > 0:
            b = min(chunk, remaining)
            pts = rng.random((b, k, 2)) * region_side
            d2 = (pts[:, :, 0] - cx) ** 2 + (pts[:, :, 1] - cy) ** 2
            if d < k:
                kth = np.partition(d2, d - 1, axis=1)[:, d - 1]
            else:
                kth = d2.max(axis=1)
            total += float(np.sqrt(kth).sum())
            remaining -= b
        means[k] = total / trials
    logk = np.log(np.array(k_values, dtype=float))
    logm = np.log(np.array([means[k] for k in k_values]))
    slope, intercept = np.polyfit(logk, logm, 1)
    return {"means": means, "slope": float(slope),
            "intercept": float(intercept)}
