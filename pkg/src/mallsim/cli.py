"""Command-line entry point.

Subcommands::

    clean      parse + clean a raw trace into canonical job JSON
    synth      generate a synthetic workload from a named preset
    transform  convert a seeded fraction of jobs to malleable form
    simulate   run one workload under one strategy
    sweep      run the strategy x fraction x seed grid from a config file
    report     percentage improvements vs. the rigid baseline + plot data

Exit codes: 0 success, 2 configuration or input error, 3 infeasible
workload, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import engine, malleability, metrics, speedup, sweep, synth, workload
from .strategies import StrategyId

log = logging.getLogger("mallsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mallsim",
        description="Tick-driven cluster simulator for malleable job scheduling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="clean a raw trace into canonical job JSON")
    p.add_argument("--trace", required=True, help="raw trace CSV")
    p.add_argument("--dialect", required=True, help="dialect JSON file")
    p.add_argument("--out", required=True, help="canonical job JSON to write")
    p.add_argument("--tick", type=int, default=1, help="merge tolerance in seconds")
    p.add_argument("--limit-fill", type=float, default=1.25)
    p.add_argument("--window-start", type=int, default=None)
    p.add_argument("--window-duration", type=int, default=None)
    p.add_argument("--report", default=None, help="cleaning report JSON to write")

    p = sub.add_parser("synth", help="generate a synthetic workload")
    p.add_argument("--preset", required=True, choices=sorted(synth.PRESETS))
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--rate", type=float, default=None, help="jobs per hour")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("transform", help="make a seeded fraction of jobs malleable")
    p.add_argument("--jobs", required=True, help="canonical job JSON")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True, help="cluster node count")
    p.add_argument("--model", choices=["amdahl", "downey"], default="amdahl")
    p.add_argument("--parallel-fraction", type=float, default=0.9)
    p.add_argument("--avg-parallelism", type=float, default=64.0)
    p.add_argument("--variance", type=float, default=0.5)
    p.add_argument("--min-efficiency", type=float, default=0.5)
    p.add_argument("--shrink-floor", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run one workload under one strategy")
    p.add_argument("--workload", required=True, help="canonical or transformed JSON")
    p.add_argument("--strategy", required=True, choices=[s.value for s in StrategyId])
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--tick", type=int, required=True)
    p.add_argument("--out", required=True, help="result JSON")
    p.add_argument("--decision-log", default=None, help="per-tick LDJSON trace")
    p.add_argument(
        "--series-dir", default=None,
        help="also write utilization.dat and queue.dat (time, value) here",
    )

    p = sub.add_parser("sweep", help="run the full experiment grid")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=None, help="override output_dir")
    p.add_argument("--seed-list", default=None, help="comma-separated seeds")
    p.add_argument("--fractions", default=None, help="comma-separated fractions")
    p.add_argument(
        "--strategy",
        action="append",
        default=None,
        choices=[s.value for s in StrategyId],
        help="restrict to this strategy (repeatable)",
    )
    p.add_argument("--tick", type=int, default=None)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--warm-up", type=int, default=None, help="seconds")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="improvements vs. the rigid baseline")
    p.add_argument("--aggregate", required=True, help="aggregate.csv from a sweep")
    p.add_argument("--out-dir", required=True)
    return parser


def _model_from_args(args) -> speedup.SpeedupModel:
    if args.model == "amdahl":
        return speedup.AmdahlSpeedup(parallel_fraction=args.parallel_fraction)
    return speedup.DowneySpeedup(
        avg_parallelism=args.avg_parallelism, variance=args.variance
    )


def _cmd_clean(args) -> int:
    dialect = workload.TraceDialect.from_file(args.dialect)
    records, skipped = workload.parse_trace(args.trace, dialect)
    raw_count = len(records)
    raw_runtime = sum(r.runtime for r in records)
    merged = workload.merge_split_entries(records, tolerance_seconds=args.tick)
    kept, shared_count, shared_runtime = workload.filter_shared_node_jobs(merged)
    jobs = workload.finalize_jobs(kept, limit_fill_factor=args.limit_fill)
    if args.window_start is not None:
        if args.window_duration is None:
            raise ConfigError("--window-start requires --window-duration")
        jobs = workload.select_window(jobs, args.window_start, args.window_duration)
    workload.emit_canonical(jobs, args.out)
    report = {
        "raw_rows_skipped": skipped,
        "raw_jobs": raw_count,
        "merged_entries": raw_count - len(merged),
        "shared_jobs_removed": shared_count,
        "removed_runtime_seconds": shared_runtime,
        "removed_runtime_relative": (shared_runtime / raw_runtime) if raw_runtime else 0.0,
        "cleaned_jobs": len(jobs),
    }
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    for key, value in report.items():
        log.info("%s: %s", key, value)
    return EXIT_OK


def _cmd_synth(args) -> int:
    profile = synth.preset(
        args.preset, seed=args.seed, job_count=args.jobs, rate_per_hour=args.rate
    )
    jobs = synth.generate(profile)
    workload.emit_canonical(jobs, args.out)
    log.info("wrote %d jobs to %s", len(jobs), args.out)
    return EXIT_OK


def _cmd_transform(args) -> int:
    jobs = workload.load_canonical(args.jobs)
    model = _model_from_args(args)
    thresholds = malleability.EfficiencyThresholds(
        min_efficiency_for_max=args.min_efficiency,
        shrink_floor_ratio=args.shrink_floor,
    )
    mixed = malleability.transform_workload(
        jobs, args.fraction, args.seed, model, thresholds, args.nodes
    )
    doc = mixed.to_dict(args.nodes, thresholds)
    if doc["model"] is None:
        doc["model"] = model.params()
    Path(args.out).write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    log.info("converted %d of %d jobs", mixed.malleable_count, len(jobs))
    return EXIT_OK


def _load_workload_file(path: str) -> malleability.MixedWorkload:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "malleable_fraction" in data:
        return malleability.mixed_workload_from_dict(data)
    jobs = workload.load_canonical(path)
    return malleability.MixedWorkload(
        entries=tuple(jobs), malleable_fraction=0.0, seed=0
    )


def _cmd_simulate(args) -> int:
    mixed = _load_workload_file(args.workload)
    cluster = engine.ClusterConfig(node_count=args.nodes, tick_seconds=args.tick)
    strategy = StrategyId.from_name(args.strategy)
    trace = None
    log_fh = None
    if args.decision_log:
        log_fh = open(args.decision_log, "w", encoding="utf-8")

        def trace(view, decisions):
            log_fh.write(
                json.dumps(
                    {
                        "t": view.now,
                        "free": view.free_nodes,
                        "queue": [q.id for q in view.queue],
                        "blocked_head": decisions.blocked_head,
                        "starts": [[s.job_id, s.nodes] for s in decisions.starts],
                        "resizes": [[r.job_id, r.nodes] for r in decisions.resizes],
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )

    try:
        result = engine.run_simulation(
            mixed,
            cluster,
            strategy,
            meta={"fraction": mixed.malleable_fraction, "seed": mixed.seed},
            trace=trace,
        )
    finally:
        if log_fh is not None:
            log_fh.close()
    Path(args.out).write_text(result.to_json(), encoding="utf-8")
    if args.series_dir:
        result.write_series(args.series_dir)
    log.info("simulated %d jobs under %s", len(result.outcomes), args.strategy)
    return EXIT_OK


def _parse_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _jobs_from_config(config: dict) -> list[workload.RigidJobSpec]:
    source = config.get("workload")
    if not isinstance(source, dict) or "kind" not in source:
        raise ConfigError("config needs a workload object with a 'kind'")
    kind = source["kind"]
    if kind == "canonical":
        return workload.load_canonical(source["path"])
    if kind == "synth":
        if "profile" in source:
            profile = synth.profile_from_dict(source["profile"])
        else:
            profile = synth.preset(
                source["preset"],
                seed=int(source.get("seed", 1)),
                job_count=source.get("jobs"),
                rate_per_hour=source.get("rate_per_hour"),
            )
        return synth.generate(profile)
    if kind == "trace":
        dialect = workload.TraceDialect.from_file(source["dialect"])
        records, _ = workload.parse_trace(source["path"], dialect)
        merged = workload.merge_split_entries(
            records, tolerance_seconds=int(source.get("merge_tolerance", 1))
        )
        kept, _, _ = workload.filter_shared_node_jobs(merged)
        return workload.finalize_jobs(kept)
    raise ConfigError(f"unknown workload kind: {kind!r}")


def _plan_from_config(config: dict, args) -> tuple[sweep.SweepPlan, Path]:
    cluster_cfg = config.get("cluster", {})
    nodes = args.nodes or cluster_cfg.get("nodes")
    tick = args.tick or cluster_cfg.get("tick")
    if not nodes or not tick:
        raise ConfigError("cluster nodes and tick are required (config or flags)")
    strategy_names = args.strategy or config.get(
        "strategies", [s.value for s in StrategyId]
    )
    strategies = tuple(StrategyId.from_name(n) for n in strategy_names)
    if args.fractions is not None:
        fractions = tuple(float(x) for x in args.fractions.split(","))
    else:
        fractions = tuple(config.get("fractions", sweep.DEFAULT_FRACTIONS))
    if args.seed_list is not None:
        seeds = tuple(int(x) for x in args.seed_list.split(","))
    else:
        seeds = tuple(config.get("seeds", sweep.DEFAULT_SEEDS))
    warm_up = args.warm_up if args.warm_up is not None else int(
        config.get("warm_up_seconds", metrics.DEFAULT_WARM_UP)
    )
    model = speedup.model_from_config(
        config.get("model", {"kind": "amdahl", "parallel_fraction": 0.9})
    )
    thr = config.get("thresholds", {})
    thresholds = malleability.EfficiencyThresholds(
        min_efficiency_for_max=float(thr.get("min_efficiency_for_max", 0.5)),
        shrink_floor_ratio=float(thr.get("shrink_floor_ratio", 0.5)),
    )
    out_dir = Path(args.out or config.get("output_dir", "out"))
    try:
        plan = sweep.SweepPlan(
            cluster=engine.ClusterConfig(node_count=int(nodes), tick_seconds=int(tick)),
            strategies=strategies,
            fractions=fractions,
            seeds=seeds,
            model=model,
            thresholds=thresholds,
            warm_up=warm_up,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return plan, out_dir


def _cmd_sweep(args) -> int:
    config = _parse_config(args.config)
    plan, out_dir = _plan_from_config(config, args)
    jobs = _jobs_from_config(config)
    n_cells = len(plan.cells())
    log.info(
        "sweeping %d cells (%d strategies x %d fractions x %d seeds) on %d jobs",
        n_cells, len(plan.strategies), len(plan.fractions), len(plan.seeds), len(jobs),
    )
    sweep.run_sweep(jobs, plan, out_dir=out_dir, workers=args.workers)
    log.info("aggregate written to %s", out_dir / "aggregate.csv")
    return EXIT_OK


def _cmd_report(args) -> int:
    aggregates = sweep.read_aggregate_csv(args.aggregate)
    try:
        rows = sweep.improvement_rows(aggregates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep.write_improvements_csv(rows, out_dir / "improvements.csv")
    log.info("improvements written to %s", out_dir / "improvements.csv")
    return EXIT_OK


_COMMANDS = {
    "clean": _cmd_clean,
    "synth": _cmd_synth,
    "transform": _cmd_transform,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except engine.InfeasibleWorkloadError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except (ConfigError, workload.WorkloadError, metrics.MetricsError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
