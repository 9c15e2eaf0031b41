"""Maximum-weight independent set on a conflict graph.

Vertices are candidate links; an independent set is a feasible slot. All
routines return vertex indices into ``graph.links``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .protocol import ConflictGraph


class BudgetExceeded(RuntimeError):
    """Raised when an exact search exceeds its node budget."""


@dataclass
class SearchStats:
    nodes: int = 0
    pruned: int = 0


def _order(graph: ConflictGraph) -> list[int]:
    # heaviest first, ties by (tx, rx)
    return sorted(range(len(graph)), key=lambda k: (-graph.links[k].length, graph.links[k].tx, graph.links[k].rx))


def branch_and_bound(
    graph: ConflictGraph,
    n_nodes: int | None = None,
    cap: float = math.inf,
    max_search_nodes: int = 5_000_000,
    stats: SearchStats | None = None,
) -> list[int]:
    """Exact MWIS by branching on the heaviest undecided vertex.

    A branch is cut when ``current + bound <= incumbent``. The bound is the
    smallest of: the sum of undecided weights; a clique cover by transmitter
    and by receiver (links sharing an endpoint conflict), truncated to as many
    links as the free nodes can still host; and ``cap - current`` for a known
    global upper bound ``cap``.
    """
    stats = stats if stats is not None else SearchStats()
    L = len(graph)
    if L == 0:
        return []
    order = _order(graph)
    pos = {v: p for p, v in enumerate(order)}
    w = [graph.links[v].length for v in order]
    adj = [0] * L
    for p, v in enumerate(order):
        m = 0
        for u in graph.neighbors(v).tolist():
            m |= 1 << pos[u]
        adj[p] = m

    nodes = sorted({l.tx for l in graph.links} | {l.rx for l in graph.links})
    if n_nodes is None:
        n_nodes = len(nodes)
    tx_masks: dict[int, int] = {}
    rx_masks: dict[int, int] = {}
    for p, v in enumerate(order):
        l = graph.links[v]
        tx_masks[l.tx] = tx_masks.get(l.tx, 0) | (1 << p)
        rx_masks[l.rx] = rx_masks.get(l.rx, 0) | (1 << p)
    tx_groups = list(tx_masks.values())
    rx_groups = list(rx_masks.values())

    def lowbit(m: int) -> int:
        return (m & -m).bit_length() - 1

    def cover_bound(cand: int, groups: list[int], slots: int) -> float:
        # order is weight-descending, so the lowest set bit is the group's heaviest member
        tops = [w[lowbit(cand & g)] for g in groups if cand & g]
        if len(tops) > slots:
            tops.sort(reverse=True)
            tops = tops[:slots]
        return sum(tops)

    best_w = -1.0
    best_set: list[int] = []

    def rec(cand: int, cur: float, chosen: list[int]) -> None:
        nonlocal best_w, best_set
        while True:
            stats.nodes += 1
            if stats.nodes > max_search_nodes:
                raise BudgetExceeded(f"branch-and-bound exceeded {max_search_nodes} search nodes")
            if cand == 0:
                if cur > best_w:
                    best_w, best_set = cur, list(chosen)
                return
            slots = (n_nodes - 2 * len(chosen)) // 2
            bound = min(
                cover_bound(cand, tx_groups, slots),
                cover_bound(cand, rx_groups, slots),
                cap - cur,
            )
            if cur + bound <= best_w:
                stats.pruned += 1
                return
            p = lowbit(cand)
            bit = 1 << p
            chosen.append(p)
            rec(cand & ~adj[p] & ~bit, cur + w[p], chosen)
            chosen.pop()
            cand &= ~bit

    rec((1 << L) - 1, 0.0, [])
    return sorted(order[p] for p in best_set)


def greedy(graph: ConflictGraph, rule: str = "ratio") -> list[int]:
    """Static-order greedy: admit each vertex not adjacent to an admitted one.

    ``rule="ratio"`` orders by ``weight / (degree + 1)``; ``rule="length"``
    orders by weight alone. Ties break by (tx, rx).
    """
    L = len(graph)
    if L == 0:
        return []
    w = graph.weights
    if rule == "ratio":
        key = w / (graph.degree() + 1.0)
    elif rule == "length":
        key = w
    else:
        raise ValueError(f"unknown greedy rule {rule!r}")
    txs = np.array([l.tx for l in graph.links])
    rxs = np.array([l.rx for l in graph.links])
    order = np.lexsort((rxs, txs, -key))
    blocked = np.zeros(L, dtype=bool)
    chosen = []
    for v in order.tolist():
        if blocked[v]:
            continue
        chosen.append(v)
        blocked[graph.neighbors(v)] = True
        blocked[v] = True
    return sorted(chosen)


def local_search(graph: ConflictGraph, start: list[int], max_iters: int = 10_000) -> list[int]:
    """(1,2)-swap hill climbing.

    A move removes at most one solution vertex and inserts one or two vertices
    whose only solution neighbour was the removed one; it is taken only when
    the weight strictly increases. Free vertices are inserted greedily after
    every move. Stops at a local optimum or after ``max_iters`` moves.
    """
    L = len(graph)
    if L == 0:
        return []
    w = graph.weights.tolist()
    nbrs = [graph.neighbors(v) for v in range(L)]
    nbr_sets: dict[int, set[int]] = {}

    def nset(v: int) -> set[int]:
        s = nbr_sets.get(v)
        if s is None:
            s = nbr_sets[v] = set(nbrs[v].tolist())
        return s

    in_sol = np.zeros(L, dtype=bool)
    tight = np.zeros(L, dtype=np.int64)
    for v in start:
        if in_sol[v] or tight[v]:
            raise ValueError("start set is not independent")
        in_sol[v] = True
        tight[nbrs[v]] += 1
    txs = [l.tx for l in graph.links]
    rxs = [l.rx for l in graph.links]
    pref = sorted(range(L), key=lambda k: (-w[k], txs[k], rxs[k]))

    def insert(v: int) -> None:
        in_sol[v] = True
        tight[nbrs[v]] += 1

    def remove(v: int) -> None:
        in_sol[v] = False
        tight[nbrs[v]] -= 1

    def fill() -> None:
        for v in pref:
            if not in_sol[v] and tight[v] == 0:
                insert(v)

    fill()
    moves = 0
    improved = True
    while improved and moves < max_iters:
        improved = False
        for x in np.flatnonzero(in_sol).tolist():
            if not in_sol[x]:
                continue
            nb = nbrs[x]
            cand = nb[(tight[nb] == 1) & ~in_sol[nb]]
            if len(cand) == 0:
                continue
            cand = sorted(cand.tolist(), key=lambda k: (-w[k], txs[k], rxs[k]))
            best_gain, best_move = 0.0, None
            for i, u in enumerate(cand):
                if 2 * w[u] - w[x] <= best_gain:
                    break
                if w[u] - w[x] > best_gain:
                    best_gain, best_move = w[u] - w[x], (u,)
                su = nset(u)
                for v in cand[i + 1 :]:
                    g = w[u] + w[v] - w[x]
                    if g <= best_gain:
                        break
                    if v not in su:
                        best_gain, best_move = g, (u, v)
                        break
            if best_move is not None:
                remove(x)
                for u in best_move:
                    insert(u)
                fill()
                moves += 1
                improved = True
                if moves >= max_iters:
                    break
    return sorted(np.flatnonzero(in_sol).tolist())


def is_independent(graph: ConflictGraph, vertices: list[int]) -> bool:
    s = set(vertices)
    return all(not (s & set(graph.neighbors(v).tolist())) for v in vertices)
