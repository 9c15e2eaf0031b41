"""Transport capacity T(X) of a finite node set.

Relaying never beats sending every hop as its own packet, and time sharing
is convex, so the supremum over schedules is attained by repeating a single
maximum-weight feasible slot. Every method below therefore searches for one
slot; :class:`Schedule` exists for time sharing, flattening and the rule that every node
must send some traffic of its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import mwis
from .geometry import PointSet, Region, distance
from .protocol import (
    Link,
    ModelParams,
    Slot,
    build_conflict_graph,
    enumerate_candidate_links,
    is_feasible,
)

METHODS = ("bruteforce", "branch-and-bound", "greedy", "local-search")
DEFAULT_PRUNING_K = 6


@dataclass(frozen=True)
class Schedule:
    """Convex time share of feasible slots; weights are positive and sum to 1."""

    slots: tuple[tuple[float, Slot], ...]

    def __post_init__(self):
        slots = tuple((float(w), s if isinstance(s, Slot) else Slot(tuple(s))) for w, s in self.slots)
        if not slots:
            raise ValueError("a schedule needs at least one slot")
        if any(not (0 < w <= 1 + 1e-12) for w, _ in slots):
            raise ValueError("slot weights must lie in (0, 1]")
        total = math.fsum(w for w, _ in slots)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"slot weights sum to {total!r}, expected 1")
        object.__setattr__(self, "slots", slots)

    @classmethod
    def single(cls, slot: Slot) -> Schedule:
        return cls(((1.0, slot),))

    @classmethod
    def idle(cls) -> Schedule:
        return cls(((1.0, Slot()),))

    @property
    def value(self) -> float:
        return math.fsum(w * s.value for w, s in self.slots)

    def rates(self) -> dict[tuple[int, int], float]:
        """Realised rate of every directed link: total weight of the slots using it."""
        out: dict[tuple[int, int], list[float]] = {}
        for w, s in self.slots:
            for l in s:
                out.setdefault((l.tx, l.rx), []).append(w)
        return {k: math.fsum(v) for k, v in out.items()}

    def transmitters(self) -> set[int]:
        return {l.tx for w, s in self.slots if w > 0 for l in s}

    def is_feasible(self, ps: PointSet, mp: ModelParams) -> bool:
        return all(is_feasible(s, ps, mp) for _, s in self.slots)

    def to_dict(self) -> dict:
        return {"slots": [{"weight": w, "links": [[l.tx, l.rx] for l in s]} for w, s in self.slots]}

    @classmethod
    def from_dict(cls, data: dict, ps: PointSet) -> Schedule:
        return cls(
            tuple(
                (float(item["weight"]), Slot(tuple(Link.between(ps, a, b) for a, b in item["links"])))
                for item in data["slots"]
            )
        )


@dataclass
class TcResult:
    value: float
    schedule: Schedule
    method: str
    optimal: bool
    upper_bound: float
    n: int = 0
    beta: float = 2.0
    info: dict = field(default_factory=dict)

    @property
    def slot(self) -> Slot:
        """The single slot found by the search (solver results always have one)."""
        return self.schedule.slots[0][1]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta": self.beta,
            "method": self.method,
            "value": self.value,
            "upper_bound": self.upper_bound,
            "optimal": self.optimal,
            **self.schedule.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, ps: PointSet) -> TcResult:
        return cls(
            value=float(data["value"]),
            schedule=Schedule.from_dict(data, ps),
            method=data["method"],
            optimal=bool(data["optimal"]),
            upper_bound=float(data["upper_bound"]),
            n=int(data["n"]),
            beta=float(data["beta"]),
        )


@dataclass
class MultihopFlow:
    source: int
    destination: int
    rate: float
    path: tuple[int, ...]

    def __post_init__(self):
        self.path = tuple(int(v) for v in self.path)
        if not self.rate > 0:
            raise ValueError("flow rate must be positive")
        if len(self.path) < 2 or self.path[0] != self.source or self.path[-1] != self.destination:
            raise ValueError(f"path {self.path} must run from {self.source} to {self.destination}")
        if any(a == b for a, b in zip(self.path, self.path[1:])):
            raise ValueError("consecutive path nodes must differ")

    def hops(self) -> list[tuple[int, int]]:
        return list(zip(self.path, self.path[1:]))


# --- sphere packing ---------------------------------------------------------


def capsule_area_coefficient(beta: float) -> float:
    """Area of a link's guard capsule divided by its squared length."""
    return (beta - 1.0) + math.pi * (beta - 1.0) ** 2 / 4.0


def packing_constant(beta: float) -> float:
    """K(beta): any feasible slot of k links inside a square of side t has total length <= K t sqrt(k).

    Capsules of a feasible slot are disjoint and, since no link is longer than
    the diagonal sqrt(2) t, they stay inside the square inflated by
    (beta - 1) / sqrt(2) * t on every side. Summing areas gives
    sum d^2 <= (1 + sqrt(2)(beta - 1))^2 t^2 / c_beta; Cauchy-Schwarz does the rest.
    """
    inflated = (1.0 + math.sqrt(2.0) * (beta - 1.0)) ** 2
    return math.sqrt(inflated / capsule_area_coefficient(beta))


def sphere_packing_constant(beta: float) -> float:
    """C(beta) in T(X) <= C t sqrt(n); a slot holds at most n/2 node-disjoint links."""
    return packing_constant(beta) / math.sqrt(2.0)


def sphere_packing_upper_bound(ps: PointSet, mp: ModelParams, r: Region | None = None) -> float:
    r = r or ps.region
    if len(ps) and not r.contains_array(ps.xy, tol=1e-12 * max(1.0, r.side)).all():
        raise ValueError("point set is not contained in the bounding region")
    return sphere_packing_constant(mp.beta) * r.side * math.sqrt(len(ps))


# --- solvers ----------------------------------------------------------------


def _result(ps: PointSet, mp: ModelParams, links: Sequence[Link], method: str, optimal: bool, **info) -> TcResult:
    slot = Slot(tuple(links))
    return TcResult(
        value=slot.value,
        schedule=Schedule.single(slot),
        method=method,
        optimal=optimal,
        upper_bound=sphere_packing_upper_bound(ps, mp),
        n=len(ps),
        beta=mp.beta,
        info=info,
    )


def best_slot_bruteforce(links: Sequence[Link], ps: PointSet, mp: ModelParams) -> list[Link]:
    """Enumerate every node-disjoint subset of ``links`` and keep the heaviest feasible one.

    Subsets that reuse a node are infeasible under half-duplex operation and
    are skipped without evaluation; every other subset goes through
    :func:`is_feasible` directly, with no conflict graph involved.
    """
    links = sorted(links, key=lambda l: (l.tx, l.rx))
    best: list[Link] = []
    best_v = 0.0

    def rec(i: int, used: frozenset, chosen: list[Link]) -> None:
        nonlocal best, best_v
        if i == len(links):
            if chosen and is_feasible(chosen, ps, mp):
                v = math.fsum(l.length for l in chosen)
                if v > best_v:
                    best_v, best = v, list(chosen)
            return
        l = links[i]
        if l.tx not in used and l.rx not in used:
            chosen.append(l)
            rec(i + 1, used | {l.tx, l.rx}, chosen)
            chosen.pop()
        rec(i + 1, used, chosen)

    rec(0, frozenset(), [])
    return best


def tc_bruteforce(ps: PointSet, mp: ModelParams, max_nodes: int = 9) -> TcResult:
    if len(ps) > max_nodes:
        raise ValueError(
            f"bruteforce enumerates all node-disjoint link sets; n={len(ps)} exceeds max_nodes={max_nodes}"
        )
    links = enumerate_candidate_links(ps, mp)
    return _result(ps, mp, best_slot_bruteforce(links, ps, mp), "bruteforce", True)


def best_slot_exact(
    links: Sequence[Link], ps: PointSet, mp: ModelParams, cap: float = math.inf, max_search_nodes: int = 5_000_000
) -> list[Link]:
    g = build_conflict_graph(links, ps, mp)
    n_nodes = len({l.tx for l in links} | {l.rx for l in links})
    chosen = mwis.branch_and_bound(g, n_nodes=n_nodes, cap=cap, max_search_nodes=max_search_nodes)
    return [g.links[v] for v in chosen]


def tc_exact(ps: PointSet, mp: ModelParams, max_nodes: int = 16, max_search_nodes: int = 5_000_000) -> TcResult:
    """Exact T(X) by branch-and-bound over the unpruned conflict graph."""
    if len(ps) > max_nodes:
        raise ValueError(
            f"exact solver budget is n <= {max_nodes}, got n={len(ps)}; use method 'greedy' or 'local-search'"
        )
    links = enumerate_candidate_links(ps, mp)
    cap = sphere_packing_upper_bound(ps, mp)
    try:
        chosen = best_slot_exact(links, ps, mp, cap=cap, max_search_nodes=max_search_nodes)
    except mwis.BudgetExceeded as exc:
        raise ValueError(f"{exc}; use method 'greedy' or 'local-search'") from exc
    return _result(ps, mp, chosen, "branch-and-bound", True)


def tc_greedy(ps: PointSet, mp: ModelParams, pruning_k: int | None = DEFAULT_PRUNING_K, rule: str = "ratio") -> TcResult:
    links = enumerate_candidate_links(ps, mp, pruning_k)
    g = build_conflict_graph(links, ps, mp)
    chosen = mwis.greedy(g, rule)
    return _result(ps, mp, [g.links[v] for v in chosen], "greedy", False, pruning_k=pruning_k, rule=rule)


def tc_local_search(
    start: TcResult | None,
    ps: PointSet,
    mp: ModelParams,
    max_iters: int = 10_000,
    pruning_k: int | None = DEFAULT_PRUNING_K,
) -> TcResult:
    """Improve the single slot of ``start`` by (1,2)-swaps over the candidate links."""
    links = enumerate_candidate_links(ps, mp, pruning_k)
    start_links = list(start.slot) if start is not None else []
    if start is not None and not is_feasible(start_links, ps, mp):
        raise ValueError("local search needs a feasible starting slot")
    index = {(l.tx, l.rx): k for k, l in enumerate(links)}
    for l in start_links:
        if (l.tx, l.rx) not in index:
            index[(l.tx, l.rx)] = len(links)
            links.append(l)
    g = build_conflict_graph(links, ps, mp)
    chosen = mwis.local_search(g, [index[(l.tx, l.rx)] for l in start_links], max_iters=max_iters)
    res = _result(ps, mp, [g.links[v] for v in chosen], "local-search", False, pruning_k=pruning_k)
    if start is not None and res.value < start.value:
        return start
    return res


def tc_heuristic(ps: PointSet, mp: ModelParams, pruning_k: int | None = DEFAULT_PRUNING_K, max_iters: int = 10_000) -> TcResult:
    """Greedy followed by local search on one shared conflict graph."""
    links = enumerate_candidate_links(ps, mp, pruning_k)
    g = build_conflict_graph(links, ps, mp)
    chosen = mwis.local_search(g, mwis.greedy(g), max_iters=max_iters)
    return _result(ps, mp, [g.links[v] for v in chosen], "local-search", False, pruning_k=pruning_k)


Solver = Callable[[PointSet, ModelParams], TcResult]


def make_solver(method: str = "local-search", pruning_k: int | None = DEFAULT_PRUNING_K, max_iters: int = 10_000) -> Solver:
    """Return ``solve(ps, mp) -> TcResult`` for a method name."""
    if method == "bruteforce":
        return lambda ps, mp: tc_bruteforce(ps, mp)
    if method in ("exact", "branch-and-bound"):
        return lambda ps, mp: tc_exact(ps, mp)
    if method == "greedy":
        return lambda ps, mp: tc_greedy(ps, mp, pruning_k)
    if method == "local-search":
        return lambda ps, mp: tc_heuristic(ps, mp, pruning_k, max_iters)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


# --- schedules --------------------------------------------------------------


def time_share(schedules: Sequence[Schedule], weights: Sequence[float]) -> Schedule:
    if len(schedules) != len(weights) or not schedules:
        raise ValueError("need one weight per schedule")
    if any(not w > 0 for w in weights):
        raise ValueError("time-share weights must be positive")
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"time-share weights sum to {total!r}, expected 1")
    slots = [(a * w, s) for a, sched in zip(weights, schedules) for w, s in sched.slots]
    return Schedule(tuple(slots))


def flatten(
    flows: Sequence[MultihopFlow],
    ps: PointSet,
    mp: ModelParams,
    slots: Sequence[tuple[float, Slot]] | None = None,
) -> Schedule:
    """Turn a relayed multihop scheme into single-hop transmissions.

    Every hop now carries the relay's own packet at the flow's rate, so by the
    triangle inequality the transport capacity can only grow. When ``slots``
    is given it must be feasible and give each hop at least the total rate of
    the flows using it; it is returned unchanged as the flattened schedule.
    Otherwise each hop gets its own single-link slot with weight equal to its
    load, and any unused time is left idle.
    """
    load: dict[tuple[int, int], float] = {}
    for f in flows:
        for h in f.hops():
            if not (0 <= h[0] < len(ps) and 0 <= h[1] < len(ps)):
                raise IndexError(f"hop {h} references a node outside the point set")
            load[h] = load.get(h, 0.0) + f.rate
    if slots is not None:
        sched = Schedule(tuple(slots))
        if not sched.is_feasible(ps, mp):
            raise ValueError("implied slots are infeasible")
        rates = sched.rates()
        short = [h for h, r in load.items() if rates.get(h, 0.0) < r - 1e-12]
        if short:
            raise ValueError(f"slots do not support the hop loads on {short}")
        return sched
    total = math.fsum(load.values())
    if total > 1 + 1e-12:
        raise ValueError(f"hop loads need {total:.6g} > 1 time units without spatial reuse; pass explicit slots")
    out = [(r, Slot((Link.between(ps, *h),))) for h, r in sorted(load.items())]
    idle = 1.0 - math.fsum(r for r, _ in out)
    if idle > 1e-12:
        out.append((idle, Slot()))
    elif out:
        # absorb rounding so the weights sum to exactly 1
        out[-1] = (out[-1][0] + idle, out[-1][1])
    return Schedule(tuple(out)) if out else Schedule.idle()


def nearest_neighbor(ps: PointSet, i: int) -> int:
    d = [distance(ps.xy[i], ps.xy[j]) if j != i else math.inf for j in range(len(ps))]
    return int(np.argmin(d))


def round_robin(ps: PointSet) -> Schedule:
    """Each node sends once to its nearest neighbour, one link per slot, equal shares."""
    n = len(ps)
    if n < 2:
        raise ValueError("round robin needs at least two nodes")
    if n > 64:
        from scipy.spatial import cKDTree

        _, nbr = cKDTree(ps.xy).query(ps.xy, k=2)
        targets = [int(b) if b != i else int(a) for i, (a, b) in enumerate(nbr)]
    else:
        targets = [nearest_neighbor(ps, i) for i in range(n)]
    return Schedule(tuple((1.0 / n, Slot((Link.between(ps, i, t),))) for i, t in enumerate(targets)))


def enforce_constraint1(sched: Schedule, ps: PointSet, mp: ModelParams, epsilon: float = 0.01) -> Schedule:
    """Time-share ``sched`` (weight 1 - epsilon) with a round robin (weight epsilon)."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if len(ps) < 2:
        raise ValueError("a single node has no receiver, so it cannot send traffic of its own")
    return time_share([sched, round_robin(ps)], [1.0 - epsilon, epsilon])


def satisfies_constraint1(sched: Schedule | None, n: int) -> bool:
    if sched is None:
        return n == 0
    return sched.transmitters() >= set(range(n))
