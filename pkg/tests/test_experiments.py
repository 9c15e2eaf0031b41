import math
import random

import numpy as np
import pytest

from transcap.experiments import (
    CampaignLog,
    ExperimentConfig,
    RunRecord,
    bootstrap_se,
    compare_estimates,
    concentration_from_values,
    estimate_from_records,
    load_records,
    load_records_counted,
    loglog_slope,
    persist_records,
    planned_runs,
    report,
    run_campaign,
    run_concentration,
    run_nonuniform,
    run_scaling,
    run_seed,
)
from transcap.solver import sphere_packing_constant


def synthetic(ns=(100, 200, 400, 800), reps=5, f=math.sqrt, density="uniform"):
    return [
        RunRecord(seed=run_seed(0, n, r), n=n, beta=2.0, density=density, method="m", tc=f(n), upper_bound=2 * n, rep=r)
        for n in ns
        for r in range(reps)
    ]


def small_cfg(tmp_path, **kw):
    args = dict(ns=[20, 40], reps=3, seed=7, method="greedy", output=str(tmp_path / "runs.jsonl"))
    args.update(kw)
    return ExperimentConfig(**args)


# --- config ------------------------------------------------------------------------


def test_config_from_text(tmp_path):
    text = """# campaign
density = grid:2:1.6,0.4,1.6,0.4
beta = 2.5
ns = 100, 200
reps = 4
seed = 9
method = local-search
pruning_k = 8
ls_iters = 500
output = out.jsonl
"""
    path = tmp_path / "c.cfg"
    path.write_text(text)
    cfg = ExperimentConfig.from_file(path)
    assert cfg.beta == 2.5 and cfg.ns == [100, 200] and cfg.reps == 4 and cfg.pruning_k == 8
    assert cfg.output == str(tmp_path / "out.jsonl")
    assert cfg.method_id == "local-search:k=8:iters=500"
    assert cfg.density_id == "grid:2:1.6,0.4,1.6,0.4"


@pytest.mark.parametrize(
    "kw",
    [dict(ns=[200, 100]), dict(ns=[100, 100]), dict(reps=0), dict(beta=1.0), dict(density="nope")],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ExperimentConfig.from_text("density = uniform\ncolour = red\n")


def test_run_seed_distinct_and_stable():
    seeds = {run_seed(0, n, r) for n in (100, 200) for r in range(50)}
    assert len(seeds) == 100
    assert run_seed(3, 100, 1) == run_seed(3, 100, 1)
    assert all(0 <= s < 2**64 for s in seeds)


# --- record store ---------------------------------------------------------------------


def test_empty_round_trip(tmp_path):
    p = tmp_path / "r.jsonl"
    persist_records([], p)
    assert load_records(p) == []


def test_hundred_records_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [RunRecord(int(rng.integers(0, 2**63)), 100 + k, 2.0, "uniform", "greedy:k=6", float(rng.random()),
                      3.0, k, float(rng.random() * 100)) for k in range(100)]
    p = tmp_path / "r.jsonl"
    persist_records(recs, p)
    back = load_records(p)
    assert back == recs
    assert [r.wall_ms for r in back] == [r.wall_ms for r in recs]


def test_corrupt_lines_are_skipped(tmp_path, caplog):
    p = tmp_path / "r.jsonl"
    persist_records(synthetic(reps=1), p)
    with open(p, "a") as fh:
        fh.write("{not json\n")
        fh.write('{"seed": 1}\n')
    recs, bad = load_records_counted(p)
    assert len(recs) == 4 and bad == 2
    assert "corrupt" in caplog.text


def test_missing_file_loads_empty(tmp_path):
    assert load_records(tmp_path / "absent.jsonl") == []


# --- estimates ---------------------------------------------------------------------------


def test_synthetic_sqrt_law():
    est = estimate_from_records(synthetic())
    assert est.slope == pytest.approx(0.5, abs=1e-12)
    assert all(p.mean == pytest.approx(1.0) and p.std == 0 for p in est.points)
    assert est.extrapolated == pytest.approx(1.0)
    assert est.bound_constant == sphere_packing_constant(2.0)
    assert est.bracketed()
    assert not estimate_from_records(synthetic(f=lambda n: 2 * math.sqrt(n))).bracketed()


def test_single_run_estimate():
    rec = synthetic(ns=(50,), reps=1, f=lambda n: 3.0)
    est = estimate_from_records(rec)
    assert est.extrapolated == pytest.approx(3.0 / math.sqrt(50))
    assert math.isnan(est.slope)


def test_estimate_order_invariant():
    recs = synthetic(f=lambda n: math.sqrt(n) * (1 + 0.01 * (n % 7)), reps=6)
    shuffled = list(recs)
    random.Random(1).shuffle(shuffled)
    a, b = estimate_from_records(recs), estimate_from_records(shuffled)
    assert a.points == b.points and a.slope == b.slope


def test_loglog_slope_exact():
    assert loglog_slope([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)


def test_bootstrap_se_reproducible():
    v = np.random.default_rng(3).random(40)
    assert bootstrap_se(v) == bootstrap_se(v)
    assert bootstrap_se([1.0]) == 0.0
    assert 0.5 * v.std() / math.sqrt(40) < bootstrap_se(v) < 2 * v.std() / math.sqrt(40)


# --- campaigns ---------------------------------------------------------------------------------


def test_campaign_determinism_and_resume(tmp_path):
    cfg = small_cfg(tmp_path)
    log1 = CampaignLog()
    first = run_campaign(cfg, campaign_log=log1)
    assert log1.executed == 6 and log1.skipped == 0
    other = small_cfg(tmp_path, output=str(tmp_path / "again.jsonl"))
    assert run_campaign(other) == first

    log2 = CampaignLog()
    assert run_campaign(cfg, campaign_log=log2) == first
    assert log2.executed == 0 and log2.skipped == 6

    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    (tmp_path / "runs.jsonl").write_text("\n".join(lines[:3]) + "\n")
    log3 = CampaignLog()
    assert run_campaign(cfg, campaign_log=log3) == first
    assert log3.executed == 3 and log3.skipped == 3
    keys = [r.key for r in load_records(cfg.output)]
    assert len(keys) == len(set(keys)) == 6


def test_campaign_parallel_matches_serial(tmp_path):
    serial = run_campaign(small_cfg(tmp_path, output=None))
    parallel = run_campaign(small_cfg(tmp_path, output=str(tmp_path / "p.jsonl")), workers=2)
    assert serial == parallel


def test_records_respect_packing_bound(tmp_path):
    for r in run_campaign(small_cfg(tmp_path)):
        assert r.tc <= r.upper_bound
        assert r.upper_bound == pytest.approx(sphere_packing_constant(2.0) * math.sqrt(r.n))


def test_planned_runs_cover_ladder():
    cfg = ExperimentConfig(ns=[10, 20], reps=3)
    assert [(n, r) for n, r, _ in planned_runs(cfg)] == [(10, 0), (10, 1), (10, 2), (20, 0), (20, 1), (20, 2)]


def test_run_scaling_single_point(tmp_path):
    est = run_scaling(small_cfg(tmp_path, ns=[30], reps=1))
    assert est.extrapolated == est.records[0].ratio


def test_concentration_requires_reps(tmp_path):
    with pytest.raises(ValueError):
        run_concentration(small_cfg(tmp_path, reps=10))


def test_concentration_constant_values():
    rep = concentration_from_values({100: [5.0] * 30, 400: [10.0] * 30})
    assert rep.std == {100: 0.0, 400: 0.0}
    assert rep.non_increasing
    assert rep.tails[100][0.01] == 0.0


def test_concentration_tail_fraction():
    vals = [0.0] * 29 + [10.0]
    rep = concentration_from_values({100: vals}, t_grid=(0.5, 100.0))
    assert rep.tails[100][0.5] == pytest.approx(1 / 30)
    assert rep.tails[100][100.0] == 0.0


def test_nonuniform_rejects_mismatch(tmp_path):
    a = small_cfg(tmp_path, density="grid:2:4,0,0,0")
    for b in (small_cfg(tmp_path, beta=3.0), small_cfg(tmp_path, method="local-search"), small_cfg(tmp_path, ns=[20])):
        with pytest.raises(ValueError):
            run_nonuniform(a, b)


def test_nonuniform_self_comparison(tmp_path):
    cfg = small_cfg(tmp_path, output=None)
    rep = run_nonuniform(cfg, cfg)
    assert rep.ratio == pytest.approx(1.0) and rep.target == 1.0 and rep.within(1e-12)


def test_compare_estimates_arithmetic():
    f = estimate_from_records(synthetic(f=lambda n: 0.5 * math.sqrt(n), density="q"))
    u = estimate_from_records(synthetic())
    rep = compare_estimates(f, u, 0.5)
    assert rep.ratio == pytest.approx(0.5) and rep.relative_error == pytest.approx(0.0, abs=1e-12)


# --- report ----------------------------------------------------------------------------------


def test_report_table_and_csv():
    table, csv = report(synthetic())
    rows = csv.strip().splitlines()
    assert rows[0].startswith("n,mean_ratio,std_ratio")
    assert len(rows) == 5
    assert all(float(r.split(",")[1]) == pytest.approx(1.0) for r in rows[1:])
    assert "log-log slope      0.500000" in table


def test_report_nonuniform_section():
    recs = synthetic() + synthetic(f=lambda n: 0.5 * math.sqrt(n), density="grid:2:4,0,0,0")
    table, _ = report(recs)
    assert "R=0.500000" in table and "integral sqrt f=0.500000" in table


def test_report_is_pure():
    recs = synthetic(reps=3)
    assert report(recs) == report(list(reversed(recs)))
