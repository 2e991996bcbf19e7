"""Experiment orchestration: strategy x fraction x seed sweeps.

A sweep runs every (strategy, malleable-fraction, seed) cell on one job
list, writes one directory per run (result plus an echoed config that
reproduces it in isolation), aggregates seeds per cell with mean and IQR,
and emits a fixed-column CSV plus gnuplot-ready plot data. Cells are
independent, so they may run in parallel; aggregation reduces over sorted
keys, making output files byte-identical regardless of worker count.

The (easy-backfill, fraction 0) cell is the rigid baseline; the report
command turns every other cell into percentage improvements over it.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .engine import ClusterConfig, SimResult, run_simulation
from .malleability import EfficiencyThresholds, transform_workload
from .metrics import (
    DEFAULT_WARM_UP,
    METRIC_FIELDS,
    AggregateMetrics,
    SeedRun,
    aggregate,
    run_metrics,
)
from .speedup import SpeedupModel
from .strategies import StrategyId
from .workload import RigidJobSpec

DEFAULT_FRACTIONS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_SEEDS = tuple(range(1, 11))

AGGREGATE_COLUMNS = ["strategy", "fraction", "n_seeds"] + [
    f"{name}_{stat}" for name in METRIC_FIELDS for stat in ("mean", "q25", "q75")
]

BASELINE_CELL = (StrategyId.EASY_BACKFILL.value, 0.0)


@dataclass(frozen=True)
class SweepPlan:
    cluster: ClusterConfig
    strategies: tuple[StrategyId, ...]
    fractions: tuple[float, ...]
    seeds: tuple[int, ...]
    model: SpeedupModel
    thresholds: EfficiencyThresholds
    warm_up: int = DEFAULT_WARM_UP

    def __post_init__(self):
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be non-empty and distinct")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ValueError("fractions must lie in [0, 1]")

    def cells(self) -> list[tuple[StrategyId, float, int]]:
        return [
            (s, f, seed)
            for s in self.strategies
            for f in self.fractions
            for seed in self.seeds
        ]


def run_cell(
    jobs: list[RigidJobSpec],
    plan: SweepPlan,
    strategy: StrategyId,
    fraction: float,
    seed: int,
) -> tuple[SeedRun, SimResult]:
    """Transform, simulate and measure one cell."""
    workload = transform_workload(
        jobs, fraction, seed, plan.model, plan.thresholds, plan.cluster.node_count
    )
    meta = {
        "fraction": fraction,
        "seed": seed,
        "model": plan.model.params(),
        "thresholds": plan.thresholds.params(),
        "warm_up": plan.warm_up,
        "job_count": len(jobs),
    }
    result = run_simulation(workload, plan.cluster, strategy, meta=meta)
    metrics = run_metrics(result, plan.cluster, plan.warm_up)
    return (
        SeedRun(strategy=strategy.value, fraction=fraction, seed=seed, metrics=metrics),
        result,
    )


def _cell_worker(args) -> tuple[tuple[str, float, int], SeedRun, dict]:
    jobs, plan, strategy, fraction, seed, run_dir = args
    seed_run, result = run_cell(jobs, plan, strategy, fraction, seed)
    if run_dir is not None:
        _write_run_dir(Path(run_dir), plan, result)
    return (strategy.value, fraction, seed), seed_run, {}


def _write_run_dir(run_dir: Path, plan: SweepPlan, result: SimResult) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "result.json").write_text(result.to_json(), encoding="utf-8")
    echo = {
        "cluster": {
            "node_count": plan.cluster.node_count,
            "tick_seconds": plan.cluster.tick_seconds,
        },
        "strategy": result.strategy,
        "warm_up": plan.warm_up,
        **result.meta,
    }
    (run_dir / "config.json").write_text(
        json.dumps(echo, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def cell_dir(out_dir: Path, strategy: StrategyId, fraction: float, seed: int) -> Path:
    return out_dir / "runs" / strategy.value / f"f{int(round(fraction * 100)):03d}" / f"s{seed}"


def run_sweep(
    jobs: list[RigidJobSpec],
    plan: SweepPlan,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> list[AggregateMetrics]:
    """Run the full grid; write run dirs, aggregate CSV and plot data."""
    out = Path(out_dir) if out_dir is not None else None
    tasks = []
    for strategy, fraction, seed in plan.cells():
        run_dir = cell_dir(out, strategy, fraction, seed) if out else None
        tasks.append((jobs, plan, strategy, fraction, seed, run_dir))
    results: dict[tuple[str, float, int], SeedRun] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, seed_run, _ in pool.map(_cell_worker, tasks):
                results[key] = seed_run
    else:
        for task in tasks:
            key, seed_run, _ = _cell_worker(task)
            results[key] = seed_run
    aggregates = []
    for strategy in plan.strategies:
        for fraction in plan.fractions:
            cell_runs = [
                results[(strategy.value, fraction, seed)]
                for seed in sorted(plan.seeds)
            ]
            aggregates.append(aggregate(cell_runs))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_aggregate_csv(aggregates, out / "aggregate.csv")
        write_plot_data(aggregates, plan, out / "plots")
        header = {
            "cluster": {
                "node_count": plan.cluster.node_count,
                "tick_seconds": plan.cluster.tick_seconds,
            },
            "strategies": [s.value for s in plan.strategies],
            "fractions": list(plan.fractions),
            "seeds": list(plan.seeds),
            "model": plan.model.params(),
            "thresholds": plan.thresholds.params(),
            "warm_up": plan.warm_up,
            "job_count": len(jobs),
        }
        (out / "sweep_config.json").write_text(
            json.dumps(header, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
    return aggregates


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_aggregate_csv(aggregates: list[AggregateMetrics], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for agg in aggregates:
            row = [agg.strategy, format(agg.fraction, "g"), str(len(agg.seeds))]
            for name in METRIC_FIELDS:
                mean, q25, q75 = agg.stats[name]
                row.extend([_fmt(mean), _fmt(q25), _fmt(q75)])
            writer.writerow(row)


def read_aggregate_csv(path: str | Path) -> list[AggregateMetrics]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            stats = {
                name: (
                    float(row[f"{name}_mean"]),
                    float(row[f"{name}_q25"]),
                    float(row[f"{name}_q75"]),
                )
                for name in METRIC_FIELDS
            }
            out.append(
                AggregateMetrics(
                    strategy=row["strategy"],
                    fraction=float(row["fraction"]),
                    seeds=tuple(range(int(row["n_seeds"]))),
                    stats=stats,
                )
            )
    return out


_PLOT_LABELS = {
    "mean_wait": "Mean wait time (s)",
    "mean_makespan": "Mean makespan (s)",
    "mean_turnaround": "Mean turnaround (s)",
    "node_utilization": "Node utilization",
    "expands_per_job": "Expand operations per job",
    "shrinks_per_job": "Shrink operations per job",
}


def write_plot_data(
    aggregates: list[AggregateMetrics], plan: SweepPlan, plot_dir: Path
) -> None:
    """Per-metric .dat (fraction, then mean/q25/q75 per strategy) + gnuplot template."""
    plot_dir.mkdir(parents=True, exist_ok=True)
    by_cell = {(a.strategy, a.fraction): a for a in aggregates}
    names = [s.value for s in plan.strategies]
    for metric in METRIC_FIELDS:
        dat = plot_dir / f"{metric}.dat"
        with open(dat, "w", encoding="utf-8") as fh:
            header = ["fraction"] + [
                f"{s}_{stat}" for s in names for stat in ("mean", "q25", "q75")
            ]
            fh.write("# " + " ".join(header) + "\n")
            for fraction in plan.fractions:
                row = [format(fraction, "g")]
                for s in names:
                    agg = by_cell[(s, fraction)]
                    row.extend(_fmt(v) for v in agg.stats[metric])
                fh.write(" ".join(row) + "\n")
        plt = plot_dir / f"{metric}.plt"
        series = ", \\\n     ".join(
            f"'{metric}.dat' using {3 * i + 2}:{3 * i + 3}:{3 * i + 4}:xtic(1) "
            f"title '{name}'"
            for i, name in enumerate(names)
        )
        plt.write_text(
            "set terminal pngcairo size 960,640\n"
            f"set output '{metric}.png'\n"
            "set style data histogram\n"
            "set style histogram errorbars gap 1 lw 1\n"
            "set style fill solid 0.8 border -1\n"
            "set key top right\n"
            "set xlabel 'Malleable job fraction'\n"
            f"set ylabel '{_PLOT_LABELS[metric]}'\n"
            f"plot {series}\n",
            encoding="utf-8",
        )


def improvement_rows(aggregates: list[AggregateMetrics]) -> list[dict]:
    """Percentage deltas of every cell against the rigid baseline cell.

    Time metrics improve downward: 100 * (baseline - value) / baseline.
    Utilization is reported both as a percentage-point delta and as a
    relative change.
    """
    by_cell = {(a.strategy, a.fraction): a for a in aggregates}
    baseline = by_cell.get(BASELINE_CELL)
    if baseline is None:
        raise ValueError(
            "aggregate data lacks the rigid baseline cell "
            f"(strategy={BASELINE_CELL[0]}, fraction=0)"
        )
    rows = []
    for agg in aggregates:
        row = {"strategy": agg.strategy, "fraction": agg.fraction}
        for metric in ("mean_turnaround", "mean_makespan", "mean_wait"):
            base = baseline.stats[metric][0]
            value = agg.stats[metric][0]
            row[f"{metric}_improvement_pct"] = (
                100.0 * (base - value) / base if base > 0 else 0.0
            )
        base_util = baseline.stats["node_utilization"][0]
        util = agg.stats["node_utilization"][0]
        row["utilization_delta_pp"] = 100.0 * (util - base_util)
        row["utilization_relative_pct"] = (
            100.0 * (util - base_util) / base_util if base_util > 0 else 0.0
        )
        rows.append(row)
    return rows


def write_improvements_csv(rows: list[dict], path: Path) -> None:
    columns = [
        "strategy",
        "fraction",
        "mean_turnaround_improvement_pct",
        "mean_makespan_improvement_pct",
        "mean_wait_improvement_pct",
        "utilization_delta_pp",
        "utilization_relative_pct",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [row["strategy"], format(row["fraction"], "g")]
                + [_fmt(row[c]) for c in columns[2:]]
            )
