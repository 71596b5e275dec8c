"""Subsets B of R^d with an explicit closure convention.

``CLOSED`` and ``OPEN`` select [B] and (B); they differ only on the
boundary. ``HALF_OPEN`` (boxes only) keeps lower faces and drops upper ones,
which lets boxes tile a partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLOSED = "closed"
OPEN = "open"
HALF_OPEN = "half_open"


def _points(x, dim: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, dim)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    closure: str = CLOSED

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if self.closure == CLOSED:
            return np.all((x >= lo) & (x <= hi), axis=1)
        if self.closure == OPEN:
            return np.all((x > lo) & (x < hi), axis=1)
        return np.all((x >= lo) & (x < hi), axis=1)

    def bounding_box(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def with_closure(self, closure: str) -> "Box":
        return Box(self.lo, self.hi, closure)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    closure: str = CLOSED

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x) -> np.ndarray:
        r = np.linalg.norm(_points(x, self.dim) - np.asarray(self.center), axis=1)
        return r <= self.radius if self.closure == CLOSED else r < self.radius

    def bounding_box(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def with_closure(self, closure: str) -> "Ball":
        return Ball(self.center, self.radius, closure)


@dataclass(frozen=True)
class HalfSpace:
    """{x : <normal, x> >= offset}."""

    normal: tuple
    offset: float
    closure: str = CLOSED

    @property
    def dim(self) -> int:
        return len(self.normal)

    def contains(self, x) -> np.ndarray:
        s = _points(x, self.dim) @ np.asarray(self.normal, float)
        return s >= self.offset if self.closure == CLOSED else s > self.offset

    def bounding_box(self):
        n = np.asarray(self.normal, float)
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        # only axis-aligned half-spaces have a finite face
        if np.count_nonzero(n) == 1:
            j = int(np.flatnonzero(n)[0])
            if n[j] > 0:
                lo[j] = self.offset / n[j]
            else:
                hi[j] = self.offset / n[j]
        return lo, hi

    def with_closure(self, closure: str) -> "HalfSpace":
        return HalfSpace(self.normal, self.offset, closure)


@dataclass(frozen=True)
class Exterior:
    """{x : |x - center| >= radius}."""

    center: tuple
    radius: float
    closure: str = CLOSED

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x) -> np.ndarray:
        r = np.linalg.norm(_points(x, self.dim) - np.asarray(self.center), axis=1)
        return r >= self.radius if self.closure == CLOSED else r > self.radius

    def bounding_box(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def with_closure(self, closure: str) -> "Exterior":
        return Exterior(self.center, self.radius, closure)


def box_partition(lo: float, hi: float, cells: int) -> list[Box]:
    """Half-open cells tiling [lo, hi]; the last cell is closed."""
    edges = np.linspace(lo, hi, cells + 1)
    out = [Box((edges[i],), (edges[i + 1],), HALF_OPEN) for i in range(cells - 1)]
    out.append(Box((edges[-2],), (edges[-1],), CLOSED))
    return out
