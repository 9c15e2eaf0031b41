"""Protocol interference model: links, the guard-ball test and the conflict graph.

A transmission ``tx -> rx`` of length ``d`` succeeds iff no *other* transmitter
lies in the closed ball of radius ``beta * d`` around ``rx``. Nodes are
half-duplex and unicast, so a slot is also node-disjoint.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .geometry import PointSet, capsule_of_link, distance, pairwise_distance, segment_distance


@dataclass(frozen=True)
class ModelParams:
    beta: float = 2.0

    def __post_init__(self):
        if not (self.beta > 1 and math.isfinite(self.beta)):
            raise ValueError(f"guard factor beta must be > 1, got {self.beta}")


class Link(NamedTuple):
    tx: int
    rx: int
    length: float

    @classmethod
    def between(cls, ps: PointSet, tx: int, rx: int) -> Link:
        if tx == rx:
            raise ValueError(f"link endpoints coincide: {tx}")
        return cls(int(tx), int(rx), distance(ps.xy[tx], ps.xy[rx]))


@dataclass(frozen=True)
class Slot:
    """Links active together in one time step, kept in (tx, rx) order."""

    links: tuple[Link, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: (l.tx, l.rx))))

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(self.links)

    @property
    def value(self) -> float:
        return math.fsum(l.length for l in self.links)

    def pairs(self) -> list[tuple[int, int]]:
        return [(l.tx, l.rx) for l in self.links]


def enumerate_candidate_links(ps: PointSet, mp: ModelParams | None = None, pruning_k: int | None = None) -> list[Link]:
    """Candidate links in (tx, rx) order.

    Unpruned: every directed pair. Pruned: each node's links to its
    ``pruning_k`` nearest neighbours plus the globally longest pair.
    """
    n = len(ps)
    if n < 2:
        return []
    xy = ps.xy
    if pruning_k is None or pruning_k >= n - 1:
        tx, rx = np.nonzero(~np.eye(n, dtype=bool))
    else:
        if pruning_k < 1:
            raise ValueError(f"pruning_k must be >= 1, got {pruning_k}")
        _, nbr = cKDTree(xy).query(xy, k=pruning_k + 1)
        tx = np.repeat(np.arange(n), pruning_k + 1)
        rx = nbr.ravel()
        keep = tx != rx
        tx, rx = tx[keep], rx[keep]
        i, j = diameter_pair(xy)
        tx = np.append(tx, i)
        rx = np.append(rx, j)
        pairs = np.unique(np.stack([tx, rx], axis=1), axis=0)
        tx, rx = pairs[:, 0], pairs[:, 1]
    lengths = pairwise_distance(xy[tx], xy[rx])
    return [Link(int(a), int(b), float(d)) for a, b, d in zip(tx, rx, lengths)]


def diameter_pair(xy: np.ndarray) -> tuple[int, int]:
    """Lowest-index pair (i < j) realising the maximum pairwise distance."""
    n = len(xy)
    idx = np.arange(n)
    if n > 64:
        try:
            idx = np.sort(ConvexHull(xy).vertices)
        except QhullError:
            pass
    sub = xy[idx]
    d = pairwise_distance(sub[:, None, :], sub[None, :, :])
    flat = int(np.argmax(d))
    a, b = divmod(flat, len(idx))
    i, j = sorted((int(idx[a]), int(idx[b])))
    return i, j


def conflicts(li: Link, lj: Link, ps: PointSet, mp: ModelParams) -> bool:
    if {li.tx, li.rx} & {lj.tx, lj.rx}:
        return True
    xy = ps.xy
    return (
        distance(xy[lj.tx], xy[li.rx]) <= mp.beta * li.length
        or distance(xy[li.tx], xy[lj.rx]) <= mp.beta * lj.length
    )


def _check_indices(links: Iterable[Link], n: int) -> None:
    for l in links:
        if not (0 <= l.tx < n and 0 <= l.rx < n):
            raise IndexError(f"link {l.tx}->{l.rx} references a node outside [0, {n})")


def is_feasible(s: Slot | Sequence[Link], ps: PointSet, mp: ModelParams) -> bool:
    links = list(s)
    _check_indices(links, len(ps))
    if len(links) <= 1:
        return True
    nodes = [l.tx for l in links] + [l.rx for l in links]
    if len(set(nodes)) != len(nodes):
        return False
    tx = np.array([l.tx for l in links])
    rx = np.array([l.rx for l in links])
    length = np.array([l.length for l in links])
    # d[j, i] = |tx_j - rx_i|, compared against the guard radius of link i
    d = pairwise_distance(ps.xy[tx][:, None, :], ps.xy[rx][None, :, :])
    np.fill_diagonal(d, np.inf)
    return not bool(np.any(d <= mp.beta * length[None, :]))


def capsules_pairwise_disjoint(s: Slot | Sequence[Link], ps: PointSet, mp: ModelParams) -> bool:
    """True iff the guard capsules of all links in ``s`` are pairwise disjoint.

    Exact segment distances; pairs are pre-filtered by bounding-box overlap.
    """
    links = list(s)
    if len(links) <= 1:
        return True
    xy = ps.xy
    a = xy[[l.tx for l in links]]
    b = xy[[l.rx for l in links]]
    rad = (mp.beta - 1.0) / 2.0 * np.array([l.length for l in links])
    lo = np.minimum(a, b) - rad[:, None]
    hi = np.maximum(a, b) + rad[:, None]
    order = np.argsort(lo[:, 0], kind="stable")
    for pos, i in enumerate(order):
        for j in order[pos + 1 :]:
            if lo[j, 0] > hi[i, 0]:
                break
            if lo[j, 1] > hi[i, 1] or lo[i, 1] > hi[j, 1]:
                continue
            if not segment_distance(a[i], b[i], a[j], b[j]) > rad[i] + rad[j]:
                return False
    return True


def capsules_of_slot(s: Slot, ps: PointSet, mp: ModelParams):
    return [capsule_of_link(ps.xy[l.tx], ps.xy[l.rx], mp.beta) for l in s]


class GridIndex:
    """Uniform bucket grid over node positions for closed-ball range queries."""

    def __init__(self, xy: np.ndarray, cell: float):
        self.xy = np.asarray(xy, dtype=float)
        self.lo = self.xy.min(axis=0) if len(self.xy) else np.zeros(2)
        self.cell = float(cell) if cell > 0 else 1.0
        ij = np.floor((self.xy - self.lo) / self.cell).astype(np.int64)
        self.shape = tuple(ij.max(axis=0) + 1) if len(ij) else (1, 1)
        key = ij[:, 0] * self.shape[1] + ij[:, 1]
        self.order = np.argsort(key, kind="stable")
        sorted_key = key[self.order]
        ncell = self.shape[0] * self.shape[1]
        self.start = np.searchsorted(sorted_key, np.arange(ncell + 1))

    def query(self, p, r: float) -> np.ndarray:
        """Indices of nodes within distance ``r`` of ``p`` (closed), ascending."""
        # one extra cell of slack so rounding in the cell arithmetic never drops a node
        i0 = max(int(math.floor((p[0] - r - self.lo[0]) / self.cell)) - 1, 0)
        i1 = min(int(math.floor((p[0] + r - self.lo[0]) / self.cell)) + 1, self.shape[0] - 1)
        j0 = max(int(math.floor((p[1] - r - self.lo[1]) / self.cell)) - 1, 0)
        j1 = min(int(math.floor((p[1] + r - self.lo[1]) / self.cell)) + 1, self.shape[1] - 1)
        if i0 > i1 or j0 > j1:
            return np.empty(0, dtype=np.int64)
        chunks = []
        for i in range(i0, i1 + 1):
            base = i * self.shape[1]
            s, e = self.start[base + j0], self.start[base + j1 + 1]
            if e > s:
                chunks.append(self.order[s:e])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(chunks)
        q = np.broadcast_to(np.asarray(p, dtype=float), (len(cand), 2))
        hit = cand[pairwise_distance(q, self.xy[cand]) <= r]
        return np.sort(hit)


@dataclass
class ConflictGraph:
    """Candidate links (weight = length) and their symmetric conflict relation in CSR form."""

    links: list[Link]
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.array([l.length for l in self.links], dtype=float)

    def __len__(self) -> int:
        return len(self.links)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for i in range(len(self.links)):
            for j in self.neighbors(i):
                if i < j:
                    out.add((i, int(j)))
        return out

    @property
    def n_edges(self) -> int:
        return int(len(self.indices) // 2)

    @classmethod
    def from_pairs(cls, links: list[Link], i: np.ndarray, j: np.ndarray) -> ConflictGraph:
        L = len(links)
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        keep = i != j
        a = np.concatenate([i[keep], j[keep]])
        b = np.concatenate([j[keep], i[keep]])
        code = np.unique(a * max(L, 1) + b)
        a, b = np.divmod(code, max(L, 1))
        indptr = np.searchsorted(a, np.arange(L + 1)).astype(np.int64)
        return cls(list(links), indptr, b.astype(np.int64))


def build_conflict_graph(links: Sequence[Link], ps: PointSet, mp: ModelParams) -> ConflictGraph:
    """Conflict graph via a uniform grid over node positions.

    For each link only transmitters inside its guard ball are visited, plus
    links sharing an endpoint, so work tracks the number of real conflicts.
    """
    links = list(links)
    L = len(links)
    if L == 0:
        return ConflictGraph([], np.zeros(1, dtype=np.int64), np.empty(0, dtype=np.int64))
    xy = ps.xy
    tx = np.array([l.tx for l in links], dtype=np.int64)
    rx = np.array([l.rx for l in links], dtype=np.int64)
    guard = mp.beta * np.array([l.length for l in links])

    by_tx: dict[int, list[int]] = defaultdict(list)
    by_node: dict[int, list[int]] = defaultdict(list)
    for k, (a, b) in enumerate(zip(tx.tolist(), rx.tolist())):
        by_tx[a].append(k)
        by_node[a].append(k)
        by_node[b].append(k)
    by_tx_arr = {v: np.array(ks, dtype=np.int64) for v, ks in by_tx.items()}
    by_node_arr = {v: np.array(ks, dtype=np.int64) for v, ks in by_node.items()}

    used = np.unique(np.concatenate([tx, rx]))
    cell = float(np.median(guard)) or 1.0
    grid = GridIndex(xy[used], cell)

    src, dst = [], []
    for k in range(L):
        hits = used[grid.query(xy[rx[k]], guard[k])]
        parts = [by_tx_arr[v] for v in hits.tolist() if v in by_tx_arr]
        parts.append(by_node_arr[int(tx[k])])
        parts.append(by_node_arr[int(rx[k])])
        nb = np.concatenate(parts)
        src.append(np.full(len(nb), k, dtype=np.int64))
        dst.append(nb)
    return ConflictGraph.from_pairs(links, np.concatenate(src), np.concatenate(dst))


def build_conflict_graph_naive(links: Sequence[Link], ps: PointSet, mp: ModelParams) -> ConflictGraph:
    """O(L^2) reference construction calling :func:`conflicts` on every pair."""
    links = list(links)
    ii, jj = [], []
    for i in range(len(links)):
        for j in range(i + 1, len(links)):
            if conflicts(links[i], links[j], ps, mp):
                ii.append(i)
                jj.append(j)
    return ConflictGraph.from_pairs(links, np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64))
