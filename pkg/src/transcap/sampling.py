"""Seeded point-set generation for uniform and piecewise-constant densities.

A density is a list of disjoint square cells carrying a constant pdf value.
Sampling picks a cell with probability ``area * value`` and then draws a
uniform point inside it, so no rejection step is ever needed.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Point, PointSet, Region, partition_square

log = logging.getLogger(__name__)

KINDS = ("uniform-square", "blocked", "grid")


@dataclass(frozen=True)
class Density:
    kind: str
    support: Region
    cells: tuple[tuple[Region, float], ...]
    resolution: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if not self.cells:
            raise ValueError("density needs at least one cell")
        for cell, w in self.cells:
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"cell weight must be finite and non-negative, got {w}")
            if not (self.support.contains(cell.origin) and self.support.contains((cell.x1, cell.y1), tol=1e-12)):
                raise ValueError(f"cell {cell} leaves the support {self.support}")
        mass = self.masses().sum()
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"cell masses sum to {mass}, expected 1")
        _check_disjoint([c for c, _ in self.cells])

    def masses(self) -> np.ndarray:
        return np.array([c.area * w for c, w in self.cells])

    @property
    def ident(self) -> str:
        """Stable textual id used as part of experiment record keys."""
        if self.kind == "uniform-square":
            s = self.support
            if s == Region.unit():
                return "uniform"
            return f"uniform@{s.origin.x:g},{s.origin.y:g},{s.side:g}"
        if self.kind == "grid":
            ws = ",".join(f"{w:.12g}" for _, w in self.cells)
            return f"grid:{self.resolution}:{ws}"
        parts = ";".join(f"{c.origin.x:.12g},{c.origin.y:.12g},{c.side:.12g},{w:.12g}" for c, w in self.cells)
        return f"blocked:{parts}"


def _check_disjoint(cells: list[Region]) -> None:
    for i, a in enumerate(cells):
        for b in cells[i + 1 :]:
            overlap_x = min(a.x1, b.x1) - max(a.origin.x, b.origin.x)
            overlap_y = min(a.y1, b.y1) - max(a.origin.y, b.origin.y)
            if overlap_x > 1e-12 and overlap_y > 1e-12:
                raise ValueError(f"blocked cells overlap: {a} and {b}")


def uniform(support: Region | None = None) -> Density:
    support = support or Region.unit()
    return Density("uniform-square", support, ((support, 1.0 / support.area),))


def _normalised(cells: list[tuple[Region, float]]) -> list[tuple[Region, float]]:
    mass = sum(c.area * w for c, w in cells)
    if not mass > 0:
        raise ValueError("density has zero total mass")
    if abs(mass - 1.0) > 1e-9:
        log.warning("density mass %.6g normalised to 1", mass)
        cells = [(c, w / mass) for c, w in cells]
    return cells


def blocked(cells, support: Region | None = None) -> Density:
    """Piecewise-constant density on disjoint squares; weights are rescaled to unit mass."""
    cells = [(c, float(w)) for c, w in cells]
    if support is None:
        lo_x = min(c.origin.x for c, _ in cells)
        lo_y = min(c.origin.y for c, _ in cells)
        hi = max(max(c.x1 - lo_x, c.y1 - lo_y) for c, _ in cells)
        support = Region(Point(lo_x, lo_y), hi)
    return Density("blocked", support, tuple(_normalised(cells)))


def grid(weights, support: Region | None = None) -> Density:
    """Row-major ``r x r`` grid of pdf values over the support."""
    weights = [float(w) for w in np.ravel(weights)]
    r = math.isqrt(len(weights))
    if r * r != len(weights) or r == 0:
        raise ValueError(f"grid needs a square number of weights, got {len(weights)}")
    support = support or Region.unit()
    part = partition_square(support, r)
    return Density("grid", support, tuple(_normalised(list(zip(part.cells, weights)))), resolution=r)


def sample(d: Density, n: int, seed: int) -> PointSet:
    """Draw ``n`` i.i.d. points from ``d``.

    Uses a counter-based Philox stream keyed by ``seed``. Offsets within a cell
    are drawn before the cell choice, so two densities sharing a seed see the
    same uniform offsets.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    u = rng.random((n, 2))
    if d.kind == "uniform-square":
        s = d.support
        xy = np.array([s.origin.x, s.origin.y]) + s.side * u
    else:
        cum = np.cumsum(d.masses())
        cum /= cum[-1]
        pick = np.searchsorted(cum, rng.random(n), side="right")
        pick = np.minimum(pick, len(cum) - 1)
        origin = np.array([[c.origin.x, c.origin.y] for c, _ in d.cells])
        side = np.array([c.side for c, _ in d.cells])
        xy = origin[pick] + side[pick, None] * u
    # stay inside the closed support despite rounding
    s = d.support
    xy[:, 0] = np.clip(xy[:, 0], s.origin.x, s.x1)
    xy[:, 1] = np.clip(xy[:, 1], s.origin.y, s.y1)
    return PointSet(xy, d.support)


def integral_sqrt_density(d: Density) -> float:
    return float(sum(c.area * math.sqrt(w) for c, w in d.cells))


# --- files ------------------------------------------------------------------


def write_points(ps: PointSet, path) -> None:
    lines = ["x,y"] + [f"{x!r},{y!r}" for x, y in ps.xy.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_points(path, region: Region | None = None) -> PointSet:
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].replace(" ", "") != "x,y":
        raise ValueError(f"{path}: expected header 'x,y'")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        try:
            x, y = (float(v) for v in row.split(","))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad point row {row!r}") from exc
        pts.append((x, y))
    return PointSet.from_points(pts, region)


def parse_kv(text: str) -> list[tuple[str, str]]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment. Keys may repeat."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        out.append((k.strip(), v.strip()))
    return out


def _floats(s: str) -> list[float]:
    return [float(v) for v in re.split(r"[,\s]+", s.strip()) if v]


def _region(s: str) -> Region:
    x, y, side = _floats(s)
    return Region(Point(x, y), side)


def density_from_text(text: str) -> Density:
    """Build a density from key-value text.

    Keys: ``kind`` (uniform | blocked | grid), ``support = x y side``,
    repeated ``cell = x y side weight`` for blocked, ``weights = w1 w2 ...``
    (row-major, square count) for grid.
    """
    kv = parse_kv(text)
    keys = dict(kv)
    kind = keys.get("kind", "").lower()
    support = _region(keys["support"]) if "support" in keys else None
    if kind in ("uniform", "uniform-square"):
        return uniform(support)
    if kind == "grid":
        return grid(_floats(keys["weights"]), support)
    if kind == "blocked":
        cells = []
        for k, v in kv:
            if k == "cell":
                x, y, side, w = _floats(v)
                cells.append((Region(Point(x, y), side), w))
        if not cells:
            raise ValueError("blocked density needs at least one 'cell' line")
        return blocked(cells, support)
    raise ValueError(f"unknown density kind {kind!r}")


def density_to_text(d: Density) -> str:
    s = d.support
    lines = [f"kind = {'uniform' if d.kind == 'uniform-square' else d.kind}",
             f"support = {s.origin.x!r} {s.origin.y!r} {s.side!r}"]
    if d.kind == "grid":
        lines.append("weights = " + " ".join(repr(w) for _, w in d.cells))
    elif d.kind == "blocked":
        lines += [f"cell = {c.origin.x!r} {c.origin.y!r} {c.side!r} {w!r}" for c, w in d.cells]
    return "\n".join(lines) + "\n"


def parse_density(spec: str) -> Density:
    """Resolve a density spec string.

    ``uniform``; ``grid:R:w1,w2,...`` (inline row-major weights); or
    ``blocked:PATH`` / ``grid:PATH`` / ``file:PATH`` naming a key-value file.
    Canonical ids produced by :attr:`Density.ident` parse back to equal densities.
    """
    spec = spec.strip()
    if spec == "uniform":
        return uniform()
    if spec.startswith("uniform@"):
        return uniform(_region(spec[len("uniform@"):]))
    m = re.fullmatch(r"grid:(\d+):(.*)", spec)
    if m:
        ws = _floats(m.group(2))
        if len(ws) != int(m.group(1)) ** 2:
            raise ValueError(f"grid:{m.group(1)} needs {int(m.group(1)) ** 2} weights, got {len(ws)}")
        return grid(ws)
    if spec.startswith("blocked:") and ";" in spec or re.fullmatch(r"blocked:[-\d.eE+,]+", spec):
        cells = []
        for part in spec[len("blocked:"):].split(";"):
            x, y, side, w = _floats(part)
            cells.append((Region(Point(x, y), side), w))
        return blocked(cells)
    kind, sep, path = spec.partition(":")
    if sep and kind in ("blocked", "grid", "file", "uniform"):
        d = density_from_text(Path(path).read_text())
        if kind not in ("file", "uniform") and d.kind != kind:
            raise ValueError(f"{path} declares kind {d.kind!r}, expected {kind!r}")
        return d
    raise ValueError(f"unrecognised density spec {spec!r}")
