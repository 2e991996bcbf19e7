"""Acceptance suite: one test per criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s`. The heavyweight sweep
(criterion 4) runs the full default grid and audits every scheduling tick,
so the whole module takes a few minutes.
"""

import json
import random
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import pytest

from mallsim.engine import ClusterConfig, run_simulation
from mallsim.malleability import (
    EfficiencyThresholds,
    MalleableJobSpec,
    MixedWorkload,
    transform_workload,
)
from mallsim.metrics import (
    METRIC_FIELDS,
    SeedRun,
    aggregate,
    quantile,
    run_metrics,
)
from mallsim.speedup import AmdahlSpeedup
from mallsim.strategies import (
    ResizeDecision,
    StartDecision,
    StrategyId,
    TickDecisions,
)
from mallsim.sweep import SweepPlan, run_sweep
from mallsim.synth import generate, preset
from mallsim.workload import (
    RigidJobSpec,
    TraceDialect,
    filter_shared_node_jobs,
    finalize_jobs,
    merge_split_entries,
    parse_trace,
)

from conformance import TickAuditor, audit_tick
from easy_oracle import easy_schedule, fcfs_schedule

FIXTURES = Path(__file__).parent / "fixtures"
MODEL = AmdahlSpeedup(0.9)
THRESHOLDS = EfficiencyThresholds()
MALLEABLE_STRATEGIES = (
    StrategyId.MIN, StrategyId.PREF, StrategyId.AVG, StrategyId.KEEP_PREF
)


def report(criterion, text):
    print(f"\nPASS criterion {criterion}: {text}")


def rigid(jid, submit, nodes, runtime, limit):
    return RigidJobSpec(
        id=jid, submit_time=submit, requested_nodes=nodes,
        runtime=runtime, time_limit=limit,
    )


# -------------------------------------------------------------------------
# Criterion 1: at malleable fraction 0 every strategy reproduces the rigid
# EASY-backfill schedule bit for bit.

def test_criterion_1_baseline_equivalence():
    rng = random.Random(101)
    for case in range(50):
        n_jobs = rng.randrange(3, 31)
        nodes = rng.randrange(2, 17)
        jobs = []
        for i in range(n_jobs):
            runtime = rng.randrange(1, 80)
            jobs.append(rigid(
                f"j{i:02d}", rng.randrange(0, 120), rng.randrange(1, nodes + 1),
                runtime, runtime + rng.randrange(0, 40),
            ))
        workload = transform_workload(jobs, 0.0, case, MODEL, THRESHOLDS, nodes)
        cluster = ClusterConfig(nodes, rng.choice((1, 5, 10)))
        reference = run_simulation(
            workload, cluster, StrategyId.EASY_BACKFILL
        ).schedule_dict()
        for strategy in MALLEABLE_STRATEGIES:
            got = run_simulation(workload, cluster, strategy).schedule_dict()
            assert got == reference, (
                f"case {case}: {strategy.value} diverges from easy-backfill "
                f"at fraction 0"
            )
    report(1, "50 fraction-0 workloads: MIN/PREF/AVG/KEEP_PREF schedules "
              "bit-identical to EASY-backfill")


# -------------------------------------------------------------------------
# Criterion 2: the engine's EASY-backfill matches a brute-force per-second
# oracle exactly, and the first reserved head is never beaten by pure FCFS.

def _oracle_instance(seed, exact_limits):
    rng = random.Random(seed)
    n_jobs = rng.randrange(2, 11)
    nodes = rng.randrange(2, 9)
    jobs = []
    for i in range(n_jobs):
        runtime = rng.randrange(1, 60)
        limit = runtime if exact_limits else runtime + rng.randrange(0, 40)
        jobs.append({
            "id": f"j{i:02d}", "submit": rng.randrange(0, 80),
            "nodes": rng.randrange(1, nodes + 1),
            "runtime": runtime, "limit": limit,
        })
    return jobs, nodes


def test_criterion_2_backfill_oracle():
    for case in range(100):
        exact = case % 2 == 0
        jobs, nodes = _oracle_instance(1000 + case, exact)
        specs = [rigid(j["id"], j["submit"], j["nodes"], j["runtime"], j["limit"])
                 for j in jobs]
        workload = MixedWorkload(
            entries=tuple(specs), malleable_fraction=0.0, seed=0
        )
        blocked = []

        def watch(view, decisions):
            if (decisions.blocked_head is not None
                    and decisions.blocked_head not in blocked):
                blocked.append(decisions.blocked_head)

        result = run_simulation(
            workload, ClusterConfig(nodes, 1), StrategyId.EASY_BACKFILL,
            trace=watch,
        )
        oracle_starts, _ = easy_schedule(jobs, nodes)
        engine_starts = {jid: o.start for jid, o in result.outcomes.items()}
        assert engine_starts == oracle_starts, f"case {case}: start times diverge"
        if exact and blocked:
            # realized-start dominance over FCFS holds for the first
            # reservation under accurate estimates (identical prefix)
            fcfs_starts = fcfs_schedule(jobs, nodes)
            first = blocked[0]
            assert result.outcomes[first].start <= fcfs_starts[first]
    report(2, "100 instances: engine start times equal the brute-force EASY "
              "oracle exactly; first reserved head never beaten by FCFS")


# -------------------------------------------------------------------------
# Criterion 3: work-conservation calibration.

def test_criterion_3_work_conservation():
    rng = random.Random(303)
    # (a) 1000 malleable jobs replayed at constant pref on a huge cluster
    # under the rigid baseline (which starts malleable jobs at pref and
    # never resizes them): duration == recorded runtime within one tick.
    jobs = []
    for i in range(1000):
        jobs.append(rigid(
            f"m{i:04d}", rng.randrange(0, 40000), rng.randrange(1, 33),
            rng.randrange(1, 2000), 4000,
        ))
    workload = transform_workload(jobs, 1.0, 1, MODEL, THRESHOLDS, 4096)
    tick = 10
    result = run_simulation(
        workload, ClusterConfig(4096, tick), StrategyId.EASY_BACKFILL
    )
    by_id = {j.id: j for j in jobs}
    for jid, outcome in result.outcomes.items():
        assert len({n for _, n in outcome.allocation_history}) == 1
        duration = outcome.end - outcome.start
        assert abs(duration - by_id[jid].runtime) <= tick, jid

    # (b) randomized resize schedules: the speedup integral over the
    # allocation history equals total_work within one tick of progress.
    for trial in range(100):
        runtime = rng.randrange(30, 1500)
        pref = rng.randrange(2, 17)
        base = rigid("w", 0, pref, runtime, runtime * 2)
        mall = transform_workload([base], 1.0, trial, MODEL, THRESHOLDS, 64)
        spec = mall.entries[0]
        assert isinstance(spec, MalleableJobSpec)

        def resizer(view):
            if view.queue:
                return TickDecisions(
                    (StartDecision("w", view.queue[0].pref_nodes),), (), None
                )
            if view.running:
                job = view.running[0]
                target = rng.randrange(job.min_nodes, job.max_nodes + 1)
                if target != job.current_nodes:
                    return TickDecisions(
                        (), (ResizeDecision("w", target),), None
                    )
            return TickDecisions((), (), None)

        result = run_simulation(mall, ClusterConfig(64, tick), resizer)
        o = result.outcomes["w"]
        hist = list(o.allocation_history)
        integral = 0.0
        for (t0, n), (t1, _) in zip(hist, hist[1:]):
            integral += MODEL.speedup(n) * (t1 - t0)
        last_t, last_n = hist[-1]
        integral += MODEL.speedup(last_n) * (o.end - last_t)
        tolerance = MODEL.speedup(last_n) * tick + 1e-6
        assert abs(integral - spec.total_work) <= tolerance, trial
    report(3, "1000 constant-pref replays reproduce trace runtimes within "
              "one tick; 100 random resize schedules conserve work")


# -------------------------------------------------------------------------
# Criterion 4: full default sweep on the KNL-like preset with a per-tick
# decision audit and per-job bounds checks.

SWEEP_CLUSTER = ClusterConfig(node_count=256, tick_seconds=10)
SWEEP_JOBS = None  # populated lazily in the worker (fork shares it)


def _audited_cell(args):
    strategy, fraction, seed = args
    jobs = _knl_jobs()
    workload = transform_workload(
        jobs, fraction, seed, MODEL, THRESHOLDS, SWEEP_CLUSTER.node_count
    )
    auditor = TickAuditor(strategy)
    result = run_simulation(workload, SWEEP_CLUSTER, strategy, trace=auditor)
    assert all(v <= SWEEP_CLUSTER.node_count for _, v in result.utilization_series)
    bounds = {
        e.id: (e.min_nodes, e.pref_nodes, e.max_nodes)
        for e in workload.entries
        if isinstance(e, MalleableJobSpec)
    }
    rigid_nodes = {
        e.id: e.requested_nodes
        for e in workload.entries
        if not isinstance(e, MalleableJobSpec)
    }
    for jid, outcome in result.outcomes.items():
        allocations = [n for _, n in outcome.allocation_history]
        if jid in bounds:
            lo, pref, hi = bounds[jid]
            assert all(lo <= n <= hi for n in allocations), jid
            if strategy is StrategyId.KEEP_PREF:
                assert all(n >= pref for n in allocations), (
                    f"{jid}: keep-pref allocation below pref"
                )
        else:
            assert allocations == [rigid_nodes[jid]], jid
    return auditor.ticks, auditor.resize_ticks


_KNL_CACHE = []


def _knl_jobs():
    if not _KNL_CACHE:
        _KNL_CACHE.append(
            generate(preset("knl-like", seed=42, job_count=2000, rate_per_hour=50.0))
        )
    return _KNL_CACHE[0]


def test_criterion_4_sweep_invariants():
    cells = [
        (strategy, fraction, seed)
        for strategy in StrategyId
        for fraction in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
        for seed in range(1, 11)
    ]
    assert len(cells) == 300
    total_ticks = 0
    with ProcessPoolExecutor(max_workers=2) as pool:
        for ticks, _ in pool.map(_audited_cell, cells, chunksize=5):
            total_ticks += ticks
    report(4, f"300-run default sweep (2000 jobs, 256 nodes): zero capacity, "
              f"bounds, keep-pref-floor or priority-order violations across "
              f"{total_ticks} audited scheduling ticks")


# -------------------------------------------------------------------------
# Criterion 5: directional reproduction of the qualitative claim on
# pressure-sized presets.

PRESSURE_PRESETS = (
    # (preset, rate/hour, jobs, tick) sized for rigid utilization 70-90%
    ("haswell-like", 38.0, 1200, 1),
    ("knl-like", 50.0, 2000, 10),
)
SEEDS_5 = (1, 2, 3, 4, 5)


def test_criterion_5_directional_gains():
    for name, rate, job_count, tick in PRESSURE_PRESETS:
        jobs = generate(preset(name, seed=1, job_count=job_count, rate_per_hour=rate))
        cluster = ClusterConfig(256, tick)
        baseline_workload = transform_workload(
            jobs, 0.0, 1, MODEL, THRESHOLDS, 256
        )
        baseline = run_metrics(
            run_simulation(baseline_workload, cluster, StrategyId.EASY_BACKFILL),
            cluster,
        )
        assert 0.70 <= baseline.node_utilization <= 0.90, (
            f"{name}: rigid utilization {baseline.node_utilization:.3f} "
            "outside the queue-pressure band"
        )
        best_util_delta = -1.0
        for strategy in MALLEABLE_STRATEGIES:
            waits, utils = [], []
            for seed in SEEDS_5:
                w02 = transform_workload(jobs, 0.2, seed, MODEL, THRESHOLDS, 256)
                m02 = run_metrics(run_simulation(w02, cluster, strategy), cluster)
                waits.append(m02.mean_wait)
                w10 = transform_workload(jobs, 1.0, seed, MODEL, THRESHOLDS, 256)
                m10 = run_metrics(run_simulation(w10, cluster, strategy), cluster)
                utils.append(m10.node_utilization)
                # criterion 6 rider: turnaround identity on every run
                assert m02.mean_turnaround == m02.mean_wait + m02.mean_makespan
                assert m10.mean_turnaround == m10.mean_wait + m10.mean_makespan
            mean_wait = sum(waits) / len(waits)
            assert mean_wait < baseline.mean_wait, (
                f"{name}/{strategy.value}: wait at 20% malleability "
                f"{mean_wait:.1f} not below rigid {baseline.mean_wait:.1f}"
            )
            best_util_delta = max(
                best_util_delta,
                sum(utils) / len(utils) - baseline.node_utilization,
            )
        # headline gains are quantified for the best-performing strategy
        # per workload; the utilization bar is read the same way
        assert best_util_delta >= 0.05, (
            f"{name}: best utilization gain {100 * best_util_delta:.1f}pp < 5pp"
        )
    report(5, "both pressure presets: every malleable strategy cuts mean "
              "wait at 20% malleability; best strategy lifts utilization "
              ">= 5 points at 100%")


# -------------------------------------------------------------------------
# Criterion 6: metrics identities.

def test_criterion_6_metrics_identities():
    # quantile oracle on 1..10
    values = [float(v) for v in range(1, 11)]
    assert quantile(values, 0.25) == pytest.approx(3.25)
    assert quantile(values, 0.75) == pytest.approx(7.75)
    # aggregation of 10 identical runs has IQR width 0
    jobs = generate(preset("knl-like", seed=9, job_count=120, rate_per_hour=400))
    cluster = ClusterConfig(128, 10)
    workload = transform_workload(jobs, 0.4, 5, MODEL, THRESHOLDS, 128)
    metrics = run_metrics(
        run_simulation(workload, cluster, StrategyId.AVG), cluster, warm_up=60
    )
    runs = [SeedRun("avg", 0.4, seed, metrics) for seed in range(10)]
    agg = aggregate(runs)
    for name in METRIC_FIELDS:
        mean, q25, q75 = agg.stats[name]
        assert q75 - q25 == 0.0
        assert mean == pytest.approx(q25, rel=1e-12)
    # turnaround identity holds on every run of a small grid
    for strategy in StrategyId:
        for fraction in (0.0, 0.5, 1.0):
            w = transform_workload(jobs, fraction, 2, MODEL, THRESHOLDS, 128)
            m = run_metrics(run_simulation(w, cluster, strategy), cluster, warm_up=60)
            assert m.mean_turnaround == m.mean_wait + m.mean_makespan
    report(6, "turnaround = wait + makespan on every run; identical-run IQR "
              "width 0; quantiles match the interpolation oracle "
              "(q25=3.25, q75=7.75 on 1..10)")


# -------------------------------------------------------------------------
# Criterion 7: cleaning pipeline on the miniature pathological fixture.

def _instantaneous_usage(intervals):
    """Peak concurrent node usage from (start, end, nodes) intervals."""
    events = []
    for start, end, nodes in intervals:
        events.append((start, nodes))
        events.append((end, -nodes))
    level = peak = 0
    for _, delta in sorted(events):
        level += delta
        peak = max(peak, level)
    return peak


def test_criterion_7_cleaning_pipeline():
    capacity = 8
    dialect = TraceDialect.from_file(FIXTURES / "miniature_dialect.json")
    records, skipped = parse_trace(FIXTURES / "miniature_trace.csv", dialect)
    assert skipped == 0
    raw_usage = _instantaneous_usage(
        (r.start_time, r.start_time + r.runtime, r.nodes_allocated)
        for r in records
    )
    assert raw_usage > capacity  # the pathology is present in the raw rows
    merged = merge_split_entries(records)
    assert sum(r.runtime for r in merged) == sum(r.runtime for r in records)
    kept, removed_count, removed_runtime = filter_shared_node_jobs(merged)
    assert removed_count == 3 and removed_runtime == 5700
    clean_usage = _instantaneous_usage(
        (r.start_time, r.start_time + r.runtime, r.nodes_allocated)
        for r in kept
    )
    assert clean_usage <= capacity
    jobs = finalize_jobs(kept)
    assert all(j.time_limit >= j.runtime for j in jobs)
    merged_job = next(j for j in jobs if j.id == "1")
    assert merged_job.runtime == 1500
    report(7, f"fixture: raw apparent usage {raw_usage} > capacity {capacity}; "
              f"after cleaning usage {clean_usage} <= {capacity}; merged "
              "runtime conserved exactly")


# -------------------------------------------------------------------------
# Criterion 8: byte-identical determinism, including parallel sweeps.

def test_criterion_8_determinism(tmp_path):
    jobs = generate(preset("knl-like", seed=21, job_count=150, rate_per_hour=400))
    plan = SweepPlan(
        cluster=ClusterConfig(node_count=128, tick_seconds=10),
        strategies=(StrategyId.EASY_BACKFILL, StrategyId.MIN, StrategyId.KEEP_PREF),
        fractions=(0.0, 0.6),
        seeds=(1, 2, 3),
        model=MODEL,
        thresholds=THRESHOLDS,
        warm_up=60,
    )
    out_serial = tmp_path / "serial"
    out_again = tmp_path / "again"
    out_parallel = tmp_path / "parallel"
    run_sweep(jobs, plan, out_dir=out_serial, workers=1)
    run_sweep(jobs, plan, out_dir=out_again, workers=1)
    run_sweep(jobs, plan, out_dir=out_parallel, workers=2)
    files = sorted(
        p.relative_to(out_serial)
        for p in out_serial.rglob("*")
        if p.is_file()
    )
    assert any(p.name == "result.json" for p in files)
    for rel in files:
        serial_bytes = (out_serial / rel).read_bytes()
        assert (out_again / rel).read_bytes() == serial_bytes, rel
        assert (out_parallel / rel).read_bytes() == serial_bytes, rel
    # single-run rerun is bit-identical too
    workload = transform_workload(jobs, 0.6, 2, MODEL, THRESHOLDS, 128)
    a = run_simulation(workload, plan.cluster, StrategyId.AVG)
    b = run_simulation(workload, plan.cluster, StrategyId.AVG)
    assert a.to_json() == b.to_json()
    report(8, f"{len(files)} sweep artifacts byte-identical across rerun and "
              "2-worker parallel execution; single runs bit-identical")
