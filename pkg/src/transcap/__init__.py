"""Transport capacity of finite wireless networks under the protocol model."""

from .geometry import Capsule, Partition, Point, PointSet, Region, distance, partition_square, scale_translate
from .protocol import Link, ModelParams, Slot, build_conflict_graph, conflicts, enumerate_candidate_links, is_feasible
from .sampling import Density, integral_sqrt_density, parse_density, sample
from .solver import (
    MultihopFlow,
    Schedule,
    TcResult,
    enforce_constraint1,
    flatten,
    make_solver,
    satisfies_constraint1,
    sphere_packing_upper_bound,
    tc_bruteforce,
    tc_exact,
    tc_greedy,
    tc_heuristic,
    tc_local_search,
    time_share,
)

__version__ = "0.1.0"
