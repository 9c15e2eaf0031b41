"""Monte Carlo campaigns for T(X_n)/sqrt(n) with a resumable JSONL record store."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .protocol import ModelParams
from .sampling import integral_sqrt_density, parse_density, parse_kv, sample
from .solver import DEFAULT_PRUNING_K, make_solver, sphere_packing_constant

log = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 200
BOOTSTRAP_SEED = 20080101


@dataclass
class ExperimentConfig:
    density: str = "uniform"
    beta: float = 2.0
    ns: list[int] = field(default_factory=lambda: [100, 200, 400, 800])
    reps: int = 20
    seed: int = 0
    method: str = "local-search"
    pruning_k: int | None = DEFAULT_PRUNING_K
    ls_iters: int = 10_000
    output: str | None = None

    def __post_init__(self):
        self.ns = [int(n) for n in self.ns]
        if any(b <= a for a, b in zip(self.ns, self.ns[1:])):
            raise ValueError(f"n ladder must be strictly increasing, got {self.ns}")
        if self.reps < 1:
            raise ValueError("replications must be >= 1")
        ModelParams(self.beta)
        parse_density(self.density)

    @property
    def method_id(self) -> str:
        """Method name plus solver effort; part of every record key."""
        if self.method in ("bruteforce", "exact", "branch-and-bound"):
            return self.method
        k = "all" if self.pruning_k is None else self.pruning_k
        if self.method == "greedy":
            return f"greedy:k={k}"
        return f"{self.method}:k={k}:iters={self.ls_iters}"

    @property
    def density_id(self) -> str:
        return parse_density(self.density).ident

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        kv = dict(parse_kv(text))
        known = {"density", "beta", "ns", "reps", "seed", "method", "pruning_k", "ls_iters", "output"}
        unknown = set(kv) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        args: dict = {}
        if "density" in kv:
            args["density"] = kv["density"]
        if "beta" in kv:
            args["beta"] = float(kv["beta"])
        if "ns" in kv:
            args["ns"] = [int(v) for v in kv["ns"].replace(",", " ").split()]
        for k in ("reps", "seed", "ls_iters"):
            if k in kv:
                args[k] = int(kv[k])
        if "method" in kv:
            args["method"] = kv["method"]
        if "pruning_k" in kv:
            args["pruning_k"] = None if kv["pruning_k"].lower() in ("none", "all") else int(kv["pruning_k"])
        if "output" in kv:
            args["output"] = kv["output"]
        return cls(**args)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        cfg = cls.from_text(Path(path).read_text())
        if cfg.output and not Path(cfg.output).is_absolute():
            cfg.output = str(Path(path).parent / cfg.output)
        return cfg


@dataclass(frozen=True)
class RunRecord:
    seed: int
    n: int
    beta: float
    density: str
    method: str
    tc: float
    upper_bound: float = math.nan
    rep: int = -1
    # timing is a side channel: it is stored but never compared
    wall_ms: float = field(default=0.0, compare=False)

    @property
    def key(self) -> tuple:
        return (self.seed, self.n, self.density, self.method)

    @property
    def ratio(self) -> float:
        return self.tc / math.sqrt(self.n)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RunRecord:
        return cls(
            seed=int(d["seed"]),
            n=int(d["n"]),
            beta=float(d["beta"]),
            density=str(d["density"]),
            method=str(d["method"]),
            tc=float(d["tc"]),
            upper_bound=float(d.get("upper_bound", math.nan)),
            rep=int(d.get("rep", -1)),
            wall_ms=float(d.get("wall_ms", 0.0)),
        )


def run_seed(base_seed: int, n: int, rep: int) -> int:
    """64-bit per-run seed derived from (base seed, n, replication)."""
    a, b = np.random.SeedSequence([int(base_seed), int(n), int(rep)]).generate_state(2, np.uint32)
    return (int(a) << 32) | int(b)


# --- record store -------------------------------------------------------------


def persist_records(records: Iterable[RunRecord], path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


def append_records(records: Iterable[RunRecord], path) -> None:
    with open(path, "a") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def load_records_counted(path) -> tuple[list[RunRecord], int]:
    """Records plus the number of unreadable lines that were skipped."""
    p = Path(path)
    if not p.exists():
        return [], 0
    out, bad = [], 0
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(RunRecord.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            bad += 1
            log.warning("%s:%d: skipping corrupt record (%s)", path, lineno, exc)
    return out, bad


def load_records(path) -> list[RunRecord]:
    return load_records_counted(path)[0]


# --- statistics ---------------------------------------------------------------


def bootstrap(values: Sequence[float], stat=np.mean, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = BOOTSTRAP_SEED) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return np.zeros(0)
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.integers(0, len(v), size=(resamples, len(v)))
    return np.array([stat(v[row]) for row in idx])


def bootstrap_se(values: Sequence[float], resamples: int = BOOTSTRAP_RESAMPLES, seed: int = BOOTSTRAP_SEED, stat=np.mean) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(bootstrap(values, stat, resamples, seed), ddof=1))


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    if len(ns) < 2:
        return math.nan
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


@dataclass
class LadderPoint:
    n: int
    mean: float
    std: float
    se: float
    count: int


@dataclass
class ScalingEstimate:
    points: list[LadderPoint]
    slope: float
    extrapolated: float
    bound_constant: float
    records: list[RunRecord] = field(default_factory=list)
    failures: int = 0

    def mean_ratio(self, n: int) -> float:
        return next(p.mean for p in self.points if p.n == n)

    def point(self, n: int) -> LadderPoint:
        return next(p for p in self.points if p.n == n)

    @property
    def extrapolated_se(self) -> float:
        return self.points[-1].se if self.points else math.nan

    def cauchy_steps(self) -> list[dict]:
        """|r(n_{i+1}) - r(n_i)| along the ladder with bootstrap errors."""
        out = []
        for a, b in zip(self.points, self.points[1:]):
            out.append({"from": a.n, "to": b.n, "diff": abs(b.mean - a.mean), "error": math.hypot(a.se, b.se)})
        return out

    def bracketed(self) -> bool:
        return all(p.mean <= self.bound_constant for p in self.points)


def estimate_from_records(records: Sequence[RunRecord], beta: float | None = None) -> ScalingEstimate:
    """Deterministic fold over records sorted by (n, rep, seed)."""
    records = sorted(records, key=lambda r: (r.n, r.rep, r.seed))
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r.ratio)
    points = []
    for n, vals in sorted(by_n.items()):
        points.append(
            LadderPoint(
                n=n,
                mean=float(np.mean(vals)),
                std=float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                se=bootstrap_se(vals),
                count=len(vals),
            )
        )
    ns = [p.n for p in points]
    means = [p.mean * math.sqrt(p.n) for p in points]
    beta = beta if beta is not None else (records[0].beta if records else 2.0)
    return ScalingEstimate(
        points=points,
        slope=loglog_slope(ns, means) if all(m > 0 for m in means) else math.nan,
        extrapolated=points[-1].mean if points else math.nan,
        bound_constant=sphere_packing_constant(beta),
        records=list(records),
    )


# --- campaigns -------------------------------------------------------------------


def _solve_one(cfg: ExperimentConfig, n: int, rep: int) -> RunRecord:
    density = parse_density(cfg.density)
    mp = ModelParams(cfg.beta)
    seed = run_seed(cfg.seed, n, rep)
    solve = make_solver(cfg.method, cfg.pruning_k, cfg.ls_iters)
    t0 = time.perf_counter()
    res = solve(sample(density, n, seed), mp)
    wall = (time.perf_counter() - t0) * 1000.0
    return RunRecord(seed, n, cfg.beta, density.ident, cfg.method_id, res.value, res.upper_bound, rep, wall)


def planned_runs(cfg: ExperimentConfig) -> list[tuple[int, int, int]]:
    """(n, rep, seed) for every run the config asks for, in execution order."""
    return [(n, rep, run_seed(cfg.seed, n, rep)) for n in cfg.ns for rep in range(cfg.reps)]


@dataclass
class CampaignLog:
    executed: int = 0
    skipped: int = 0
    failed: int = 0
    corrupt_lines: int = 0


def run_campaign(cfg: ExperimentConfig, workers: int = 1, campaign_log: CampaignLog | None = None) -> list[RunRecord]:
    """Execute every planned run not already present in ``cfg.output``.

    New records are appended as they complete, so an interrupted campaign
    resumes where it stopped. Returns the config's records in (n, rep) order.
    """
    clog = campaign_log if campaign_log is not None else CampaignLog()
    density_id, method_id = cfg.density_id, cfg.method_id
    existing: dict[tuple, RunRecord] = {}
    if cfg.output:
        recs, clog.corrupt_lines = load_records_counted(cfg.output)
        existing = {r.key: r for r in recs}
    todo = []
    for n, rep, seed in planned_runs(cfg):
        if (seed, n, density_id, method_id) in existing:
            clog.skipped += 1
        else:
            todo.append((n, rep))

    fresh: list[RunRecord] = []

    def done(rec: RunRecord) -> None:
        fresh.append(rec)
        clog.executed += 1
        if cfg.output:
            append_records([rec], cfg.output)

    if workers > 1 and len(todo) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_solve_one, cfg, n, rep): (n, rep) for n, rep in todo}
            for fut, (n, rep) in futs.items():
                try:
                    done(fut.result())
                except Exception as exc:  # noqa: BLE001 - failures are counted per run
                    clog.failed += 1
                    log.warning("run n=%d rep=%d failed: %s", n, rep, exc)
    else:
        for n, rep in todo:
            try:
                done(_solve_one(cfg, n, rep))
            except Exception as exc:  # noqa: BLE001
                clog.failed += 1
                log.warning("run n=%d rep=%d failed: %s", n, rep, exc)

    total = len(cfg.ns) * cfg.reps
    if clog.failed > 0.1 * total:
        raise RuntimeError(f"{clog.failed} of {total} runs failed")
    merged = dict(existing)
    merged.update({r.key: r for r in fresh})
    wanted = {(seed, n, density_id, method_id) for n, _, seed in planned_runs(cfg)}
    return sorted((r for k, r in merged.items() if k in wanted), key=lambda r: (r.n, r.rep, r.seed))


def run_scaling(cfg: ExperimentConfig, workers: int = 1) -> ScalingEstimate:
    clog = CampaignLog()
    records = run_campaign(cfg, workers, clog)
    est = estimate_from_records(records, cfg.beta)
    est.failures = clog.failed
    return est


# --- concentration ---------------------------------------------------------------


@dataclass
class ConcentrationReport:
    ns: list[int]
    std: dict[int, float]
    std_se: dict[int, float]
    tails: dict[int, dict[float, float]]
    non_increasing: bool
    steps: list[dict]


def concentration_from_values(values_by_n: dict[int, Sequence[float]], t_grid: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2)) -> ConcentrationReport:
    """Spread of T/sqrt(n) per n and empirical tails P(|T - mean T| >= t sqrt(n)).

    ``values_by_n`` holds raw T values.
    """
    ns = sorted(values_by_n)
    std, std_se, tails = {}, {}, {}
    for n in ns:
        v = np.asarray(values_by_n[n], dtype=float)
        r = v / math.sqrt(n)
        std[n] = float(np.std(r, ddof=1)) if len(r) > 1 else 0.0
        std_se[n] = bootstrap_se(r, stat=lambda x: np.std(x, ddof=1))
        dev = np.abs(v - v.mean())
        tails[n] = {float(t): float(np.mean(dev >= t * math.sqrt(n))) for t in t_grid}
    steps = []
    ok = True
    for a, b in zip(ns, ns[1:]):
        err = math.hypot(std_se[a], std_se[b])
        steps.append({"from": a, "to": b, "std_from": std[a], "std_to": std[b], "error": err})
        ok &= std[b] <= std[a] + err
    return ConcentrationReport(ns, std, std_se, tails, bool(ok), steps)


def run_concentration(cfg: ExperimentConfig, t_grid: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2), workers: int = 1) -> ConcentrationReport:
    if cfg.reps < 30:
        raise ValueError(f"concentration needs at least 30 replications, got {cfg.reps}")
    records = run_campaign(cfg, workers)
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r.tc)
    return concentration_from_values(by_n, t_grid)


# --- non-uniform densities ---------------------------------------------------


@dataclass
class NonuniformReport:
    ratio: float
    ratio_se: float
    target: float
    relative_error: float
    estimate_f: ScalingEstimate
    estimate_uniform: ScalingEstimate

    def within(self, tol: float) -> bool:
        return self.relative_error <= tol


def compare_estimates(est_f: ScalingEstimate, est_u: ScalingEstimate, target: float) -> NonuniformReport:
    R = est_f.extrapolated / est_u.extrapolated
    rel_se = math.hypot(est_f.extrapolated_se / est_f.extrapolated, est_u.extrapolated_se / est_u.extrapolated)
    return NonuniformReport(R, abs(R) * rel_se, target, abs(R - target) / target, est_f, est_u)


def run_nonuniform(cfg_f: ExperimentConfig, cfg_uniform: ExperimentConfig, workers: int = 1) -> NonuniformReport:
    """Ratio of extrapolated T/sqrt(n) under f and under the uniform density.

    The target is the ratio of the two integrals of sqrt(density).
    """
    if cfg_f.beta != cfg_uniform.beta:
        raise ValueError("beta differs between the two campaigns")
    if cfg_f.method_id != cfg_uniform.method_id:
        raise ValueError("solver method or effort differs between the two campaigns")
    if cfg_f.ns != cfg_uniform.ns:
        raise ValueError("n ladders differ between the two campaigns")
    est_f = run_scaling(cfg_f, workers)
    est_u = run_scaling(cfg_uniform, workers)
    target = integral_sqrt_density(parse_density(cfg_f.density)) / integral_sqrt_density(parse_density(cfg_uniform.density))
    return compare_estimates(est_f, est_u, target)


# --- reporting ------------------------------------------------------------------


def report(records: Sequence[RunRecord]) -> tuple[str, str]:
    """Summary table and CSV plot data, a pure function of the records."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.density, r.beta, r.method), []).append(r)
    lines = []
    csv_rows = ["n,mean_ratio,std_ratio,se_ratio,count,density,beta,method"]
    ests = {}
    for key in sorted(groups):
        density, beta, method = key
        est = estimate_from_records(groups[key], beta)
        ests[key] = est
        lines.append(f"density={density} beta={beta:g} method={method}")
        lines.append(f"  {'n':>6} {'reps':>5} {'mean T/sqrt(n)':>15} {'std':>10} {'se':>10}")
        for p in est.points:
            lines.append(f"  {p.n:>6} {p.count:>5} {p.mean:>15.6f} {p.std:>10.6f} {p.se:>10.6f}")
            csv_rows.append(f"{p.n},{p.mean:.12g},{p.std:.12g},{p.se:.12g},{p.count},{density},{beta:g},{method}")
        lines.append(f"  log-log slope      {est.slope:.6f}")
        lines.append(f"  extrapolated ratio {est.extrapolated:.6f}  (packing bound {est.bound_constant:.6f})")
    for (density, beta, method), est in sorted(ests.items()):
        ref = ests.get((parse_density("uniform").ident, beta, method))
        if ref is None or density == parse_density("uniform").ident:
            continue
        try:
            target = integral_sqrt_density(parse_density(density))
        except (ValueError, OSError):
            continue
        cmp = compare_estimates(est, ref, target)
        lines.append(
            f"non-uniform density={density} beta={beta:g} method={method}: "
            f"R={cmp.ratio:.6f} +- {cmp.ratio_se:.6f}  integral sqrt f={target:.6f}  rel.err={cmp.relative_error:.4f}"
        )
    return "\n".join(lines) + "\n", "\n".join(csv_rows) + "\n"
