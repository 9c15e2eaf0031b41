"""Planar primitives: points, axis-aligned squares, grid partitions and link capsules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np


class Point(NamedTuple):
    x: float
    y: float


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate: {v!r}")


def distance(p, q) -> float:
    """Euclidean distance between two points.

    Computed as sqrt(dx*dx + dy*dy) so the scalar and vectorised paths
    (see :func:`pairwise_distance`) agree bit for bit.
    """
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    return math.sqrt(dx * dx + dy * dy)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distances between two (k, 2) arrays, same rounding as :func:`distance`."""
    d = b - a
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


@dataclass(frozen=True)
class Region:
    """Axis-aligned square ``[x0, x0 + side] x [y0, y0 + side]``."""

    origin: Point
    side: float

    def __post_init__(self):
        object.__setattr__(self, "origin", Point(float(self.origin[0]), float(self.origin[1])))
        _check_finite(self.origin.x, self.origin.y, self.side)
        if not self.side > 0:
            raise ValueError(f"region side must be positive, got {self.side}")

    @classmethod
    def unit(cls) -> Region:
        return cls(Point(0.0, 0.0), 1.0)

    @property
    def area(self) -> float:
        return self.side * self.side

    @property
    def x1(self) -> float:
        return self.origin.x + self.side

    @property
    def y1(self) -> float:
        return self.origin.y + self.side

    def contains(self, p, tol: float = 0.0) -> bool:
        """Closed containment, optionally widened by ``tol``."""
        return (
            self.origin.x - tol <= p[0] <= self.x1 + tol
            and self.origin.y - tol <= p[1] <= self.y1 + tol
        )

    def contains_array(self, xy: np.ndarray, tol: float = 0.0) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.origin.x - tol)
            & (xy[:, 0] <= self.x1 + tol)
            & (xy[:, 1] >= self.origin.y - tol)
            & (xy[:, 1] <= self.y1 + tol)
        )

    def inflate(self, margin: float) -> Region:
        return Region(Point(self.origin.x - margin, self.origin.y - margin), self.side + 2 * margin)


@dataclass(frozen=True)
class PointSet:
    """Indexed node locations together with the square that encloses them."""

    xy: np.ndarray
    region: Region = field(default_factory=Region.unit)

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise ValueError("point set contains non-finite coordinates")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @classmethod
    def from_points(cls, points: Iterable, region: Region | None = None) -> PointSet:
        xy = np.array([tuple(p) for p in points], dtype=float).reshape(-1, 2)
        if region is None:
            region = bounding_square(xy)
        return cls(xy, region)

    def __len__(self) -> int:
        return len(self.xy)

    def __getitem__(self, i: int) -> Point:
        return Point(float(self.xy[i, 0]), float(self.xy[i, 1]))

    def points(self) -> list[Point]:
        return [Point(float(x), float(y)) for x, y in self.xy]

    def subset(self, mask_or_idx) -> PointSet:
        return PointSet(self.xy[mask_or_idx], self.region)

    def within(self, region: Region) -> PointSet:
        """Nodes owned by ``region`` under the half-open cell rule, re-homed to ``region``."""
        return PointSet(self.xy[owned_by(region, self.xy, self.region)], region)

    def union(self, other: PointSet, region: Region | None = None) -> PointSet:
        return PointSet(np.vstack([self.xy, other.xy]), region or self.region)


def bounding_square(xy: np.ndarray) -> Region:
    """Smallest axis-aligned square anchored at the lower-left corner of the data."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return Region.unit()
    lo = xy.min(axis=0)
    side = float((xy.max(axis=0) - lo).max())
    return Region(Point(float(lo[0]), float(lo[1])), side if side > 0 else 1.0)


@dataclass(frozen=True)
class Partition:
    parent: Region
    m: int
    cells: tuple[Region, ...]

    def cell_index(self, p) -> int:
        """Row-major index of the cell owning ``p`` (half-open, lower/left inclusive)."""
        return int(self.cell_indices(np.array([p], dtype=float))[0])

    def cell_indices(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        h = self.parent.side / self.m
        col = np.floor((xy[:, 0] - self.parent.origin.x) / h).astype(int)
        row = np.floor((xy[:, 1] - self.parent.origin.y) / h).astype(int)
        # the parent's top/right edge belongs to the last row/column
        col = np.clip(col, 0, self.m - 1)
        row = np.clip(row, 0, self.m - 1)
        # floor() of a rounded quotient can disagree with the cell bounds by one ulp
        for _ in range(2):
            cx0 = self.parent.origin.x + col * h
            cy0 = self.parent.origin.y + row * h
            cx1 = self.parent.origin.x + (col + 1) * h
            cy1 = self.parent.origin.y + (row + 1) * h
            col = np.where((xy[:, 0] < cx0) & (col > 0), col - 1, col)
            row = np.where((xy[:, 1] < cy0) & (row > 0), row - 1, row)
            col = np.where((xy[:, 0] >= cx1) & (col < self.m - 1), col + 1, col)
            row = np.where((xy[:, 1] >= cy1) & (row < self.m - 1), row + 1, row)
        return row * self.m + col

    def split(self, ps: PointSet) -> list[PointSet]:
        """Points of ``ps`` grouped by owning cell; every point lands in exactly one cell."""
        idx = self.cell_indices(ps.xy)
        return [PointSet(ps.xy[idx == k], cell) for k, cell in enumerate(self.cells)]


def partition_square(r: Region, m: int) -> Partition:
    if m < 1:
        raise ValueError(f"partition requires m >= 1, got {m}")
    h = r.side / m
    cells = tuple(
        Region(Point(r.origin.x + j * h, r.origin.y + i * h), h) for i in range(m) for j in range(m)
    )
    return Partition(r, m, cells)


def owned_by(cell: Region, xy: np.ndarray, parent: Region | None = None) -> np.ndarray:
    """Half-open membership mask: a cell owns its lower/left edges.

    The top/right edge is owned too when it lies on the boundary of ``parent``.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    close_right = parent is not None and cell.x1 >= parent.x1
    close_top = parent is not None and cell.y1 >= parent.y1
    in_x = (x >= cell.origin.x) & ((x <= cell.x1) if close_right else (x < cell.x1))
    in_y = (y >= cell.origin.y) & ((y <= cell.y1) if close_top else (y < cell.y1))
    return in_x & in_y


@dataclass(frozen=True)
class Capsule:
    """Stadium: all points within ``radius`` of the segment ``a``-``b``."""

    a: Point
    b: Point
    radius: float

    @property
    def length(self) -> float:
        return distance(self.a, self.b)

    @property
    def area(self) -> float:
        return 2.0 * self.radius * self.length + math.pi * self.radius**2

    def contains(self, p) -> bool:
        return point_segment_distance(p, self.a, self.b) <= self.radius


def capsule_of_link(tx, rx, beta: float) -> Capsule:
    if not beta > 1:
        raise ValueError(f"beta must exceed 1, got {beta}")
    d = distance(tx, rx)
    if d == 0:
        raise ValueError("zero-length link has no capsule")
    return Capsule(Point(*tx), Point(*rx), (beta - 1.0) / 2.0 * d)


def point_segment_distance(p, a, b) -> float:
    abx, aby = b[0] - a[0], b[1] - a[1]
    denom = abx * abx + aby * aby
    if denom == 0:
        return distance(p, a)
    s = ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / denom
    s = min(1.0, max(0.0, s))
    return distance(p, (a[0] + s * abx, a[1] + s * aby))


def _orient(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    # collinear / touching cases
    if d1 == 0 and point_segment_distance(p1, q1, q2) == 0:
        return True
    if d2 == 0 and point_segment_distance(p2, q1, q2) == 0:
        return True
    if d3 == 0 and point_segment_distance(q1, p1, p2) == 0:
        return True
    if d4 == 0 and point_segment_distance(q2, p1, p2) == 0:
        return True
    return False


def segment_distance(p1, p2, q1, q2) -> float:
    """Exact minimum distance between two closed segments."""
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        point_segment_distance(p1, q1, q2),
        point_segment_distance(p2, q1, q2),
        point_segment_distance(q1, p1, p2),
        point_segment_distance(q2, p1, p2),
    )


def capsules_disjoint(c1: Capsule, c2: Capsule) -> bool:
    return segment_distance(c1.a, c1.b, c2.a, c2.b) > c1.radius + c2.radius


def scale_translate(ps: PointSet, a: float, shift=(0.0, 0.0)) -> PointSet:
    if not a > 0:
        raise ValueError(f"scale factor must be positive, got {a}")
    sx, sy = float(shift[0]), float(shift[1])
    xy = ps.xy * a + np.array([sx, sy])
    r = ps.region
    region = Region(Point(r.origin.x * a + sx, r.origin.y * a + sy), r.side * a)
    return PointSet(xy, region)
