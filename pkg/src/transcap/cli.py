"""Command-line entry point: ``transcap {gen,solve,verify,scale,report}``.

Exit codes: 0 success, 1 a lemma certificate failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import lemmas
from .experiments import CampaignLog, ExperimentConfig, estimate_from_records, load_records_counted, report, run_campaign
from .geometry import Point, PointSet, Region
from .protocol import ModelParams, capsules_pairwise_disjoint
from .sampling import integral_sqrt_density, parse_density, read_points, sample, write_points
from .solver import DEFAULT_PRUNING_K, make_solver, sphere_packing_upper_bound

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LEMMAS = ("cross-boundary", "cutting", "smoothness", "glueing", "capsule", "sphere-packing")


class UsageError(Exception):
    pass


def _region(text: str | None) -> Region | None:
    if text is None:
        return None
    try:
        x, y, side = (float(v) for v in text.replace(",", " ").split())
        return Region(Point(x, y), side)
    except ValueError as exc:
        raise UsageError(f"--region expects 'x y side', got {text!r}") from exc


def _pruning(v: str) -> int | None:
    return None if v.lower() in ("none", "all") else int(v)


def _mp(beta: float) -> ModelParams:
    try:
        return ModelParams(beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def cmd_gen(args) -> int:
    d = parse_density(args.density)
    ps = sample(d, args.n, args.seed)
    masses = d.masses()
    print(f"density {d.ident}  mass {masses.sum():.12g}  integral sqrt f {integral_sqrt_density(d):.12g}")
    try:
        write_points(ps, args.out)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


def _load_points(path: str, region: Region | None) -> PointSet:
    try:
        return read_points(path, region)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def cmd_solve(args) -> int:
    mp = _mp(args.beta)
    ps = _load_points(args.points, _region(args.region))
    solve = make_solver(args.method, args.pruning_k, args.iters)
    res = solve(ps, mp)
    rec = res.to_dict()
    rec["feasible"] = bool(res.schedule.is_feasible(ps, mp))
    rec["capsules_disjoint"] = all(capsules_pairwise_disjoint(s, ps, mp) for _, s in res.schedule.slots)
    text = json.dumps(rec, sort_keys=True) + "\n"
    _write(args.out, text)
    if args.out not in (None, "-"):
        print(f"T = {res.value:.12g}  bound = {res.upper_bound:.12g}  links = {len(res.slot)}  method = {res.method}")
    return EXIT_OK


def _certificate_table(certs) -> str:
    rows = [f"{'lemma':<15} {'pass':<5} {'lhs':>14} {'rhs':>14} {'fitted':>12}  instance"]
    for c in certs:
        fitted = "-" if c.fitted_constant is None else f"{c.fitted_constant:.6g}"
        rows.append(
            f"{c.lemma:<15} {'yes' if c.passed else 'NO':<5} {c.lhs:>14.8g} {c.rhs:>14.8g} {fitted:>12}  "
            + json.dumps(c.instance, sort_keys=True)
        )
    return "\n".join(rows) + "\n"


def _instance_points(args) -> PointSet:
    if args.points:
        return _load_points(args.points, _region(args.region) or Region.unit())
    return sample(parse_density(args.density), args.n, args.seed)


def cmd_verify(args) -> int:
    mp = _mp(args.beta)
    solve = make_solver(args.method, args.pruning_k, args.iters)
    certs = []
    if args.lemma == "cross-boundary":
        for s in range(args.seed, args.seed + args.count):
            inside, outside, r = lemmas.cross_boundary_scenario(s, args.n_tx, args.n_rx, args.t, args.c1)
            certs.append(lemmas.verify_cross_boundary(inside, outside, r, mp, args.c1))
    elif args.lemma == "cutting":
        ps = _instance_points(args)
        certs.append(lemmas.verify_cutting(ps, ps.region, args.m, solve, mp))
    elif args.lemma == "smoothness":
        if args.F and args.G:
            F = _load_points(args.F, Region.unit())
            G = _load_points(args.G, Region.unit())
            certs.append(lemmas.verify_smoothness(F, G, solve, mp))
        else:
            for s in range(args.seed, args.seed + args.count):
                rng = np.random.Generator(np.random.Philox(s))
                F = PointSet(rng.random((int(rng.integers(0, 4)), 2)))
                G = PointSet(rng.random((int(rng.integers(0, 7)), 2)))
                certs.append(lemmas.verify_smoothness(F, G, solve, mp))
    elif args.lemma == "glueing":
        left = (Region(Point(0, 0), 0.5), Region(Point(0, 0.5), 0.5))
        right = (Region(Point(0.5, 0), 0.5), Region(Point(0.5, 0.5), 0.5))
        certs.append(lemmas.verify_glueing_trend(args.ns, args.reps, args.seed, left, right, solve, mp))
    elif args.lemma in ("capsule", "sphere-packing"):
        ps = _instance_points(args)
        res = solve(ps, mp)
        if args.lemma == "capsule":
            certs.append(lemmas.verify_capsule_certificate(res.slot, ps, mp))
        else:
            ub = sphere_packing_upper_bound(ps, mp)
            certs.append(lemmas.LemmaCertificate("sphere-packing", res.value <= ub, res.value, ub,
                                                 instance={"n": len(ps), "beta": mp.beta}))
    sys.stdout.write(_certificate_table(certs))
    if args.json:
        _write(args.json, "".join(c.to_json() + "\n" for c in certs))
    return EXIT_OK if all(c.passed for c in certs) else EXIT_FAIL


def cmd_scale(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if args.output:
        cfg.output = args.output
    if not cfg.output:
        raise UsageError("config has no 'output' path and --output was not given")
    clog = CampaignLog()
    records = run_campaign(cfg, args.workers, clog)
    est = estimate_from_records(records, cfg.beta)
    print(f"executed {clog.executed}  skipped {clog.skipped}  failed {clog.failed}  records {len(records)}")
    for p in est.points:
        print(f"n={p.n:<6} mean T/sqrt(n)={p.mean:.6f}  std={p.std:.6f}")
    print(f"slope {est.slope:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not Path(args.records).is_file():
        raise UsageError(f"cannot read records {args.records}")
    records, bad = load_records_counted(args.records)
    if bad:
        print(f"skipped {bad} corrupt record lines", file=sys.stderr)
    table, csv = report(records)
    sys.stdout.write(table)
    if args.csv:
        _write(args.csv, csv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transcap", description="Transport capacity under the protocol interference model.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--beta", type=float, default=2.0, help="guard factor beta > 1 (default 2)")
        sp.add_argument("--method", default="local-search",
                        choices=["bruteforce", "exact", "branch-and-bound", "greedy", "local-search"],
                        help="solver for T(X) (default local-search = greedy + (1,2)-swaps)")
        sp.add_argument("--pruning-k", type=_pruning, default=DEFAULT_PRUNING_K,
                        help=f"heuristic candidate links per node, or 'none' (default {DEFAULT_PRUNING_K})")
        sp.add_argument("--iters", type=int, default=10_000, help="local-search move limit")

    g = sub.add_parser("gen", help="sample a point set")
    g.add_argument("--density", default="uniform", help="uniform | grid:R:w1,w2,... | blocked:FILE | grid:FILE")
    g.add_argument("--n", type=int, required=True, help="number of points")
    g.add_argument("--seed", type=int, default=0, help="64-bit sampling seed")
    g.add_argument("--out", required=True, help="output CSV path (header x,y)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="compute T(X) for a point file")
    s.add_argument("--points", required=True, help="CSV point file with header x,y")
    s.add_argument("--region", help="enclosing square 'x y side' (default: bounding square of the points)")
    s.add_argument("--out", help="TcResult JSON output path (default stdout)")
    solver_flags(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a lemma and print certificates")
    v.add_argument("--lemma", required=True, help="one of: " + ", ".join(LEMMAS))
    v.add_argument("--seed", type=int, default=0, help="first seed")
    v.add_argument("--count", type=int, default=100, help="number of random scenarios (cross-boundary, smoothness)")
    v.add_argument("--n", type=int, default=200, help="points for generated instances")
    v.add_argument("--density", default="uniform", help="density for generated instances")
    v.add_argument("--points", help="point file instead of a generated instance")
    v.add_argument("--region", help="enclosing square 'x y side' for --points")
    v.add_argument("--m", type=int, default=2, help="cutting grid size m")
    v.add_argument("--F", help="point file F for smoothness")
    v.add_argument("--G", help="point file G for smoothness")
    v.add_argument("--ns", type=lambda s: [int(x) for x in s.split(",")], default=[200, 400, 800],
                   help="comma-separated n ladder for glueing")
    v.add_argument("--reps", type=int, default=10, help="replications per n for glueing")
    v.add_argument("--n-tx", type=int, default=6, help="cross-boundary transmitters per scenario")
    v.add_argument("--n-rx", type=int, default=6, help="cross-boundary receivers per scenario")
    v.add_argument("--t", type=float, default=1.0, help="cross-boundary square side")
    v.add_argument("--c1", type=float, default=1.0, help="cross-boundary max link length / t")
    v.add_argument("--json", help="also write certificates as JSON lines to this path")
    solver_flags(v)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("scale", help="run (or resume) a scaling campaign")
    c.add_argument("--config", required=True, help="key = value config file")
    c.add_argument("--output", help="records path (overrides the config)")
    c.add_argument("--workers", type=int, default=1, help="worker processes")
    c.set_defaults(func=cmd_scale)

    r = sub.add_parser("report", help="summarise a records file")
    r.add_argument("--records", required=True, help="JSONL records file")
    r.add_argument("--csv", help="write CSV plot data (n, mean_ratio, std_ratio, ...) here; '-' for stdout")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "verify" and args.lemma not in LEMMAS:
        print(f"unknown lemma {args.lemma!r}; choose from {', '.join(LEMMAS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
