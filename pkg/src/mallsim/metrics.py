"""Windowed per-run metrics and cross-seed aggregation.

Metrics are computed inside an analysis window that skips the warm-up
phase (default 12 hours) and everything after the last job submission
(drain-down). A job belongs to the window iff its submission time falls
inside it; jobs submitted in-window that finish later still count with
their full outcome.

Quantiles use linear interpolation between order statistics: for sorted
values x[0..n-1], q(p) = x[i] + frac * (x[i+1] - x[i]) with
i = floor((n-1) * p) and frac = (n-1) * p - i.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import ClusterConfig, SimResult

DEFAULT_WARM_UP = 12 * 3600

METRIC_FIELDS = (
    "mean_wait",
    "mean_makespan",
    "mean_turnaround",
    "node_utilization",
    "expands_per_job",
    "shrinks_per_job",
)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisWindow:
    start: int
    end: int


@dataclass(frozen=True)
class RunMetrics:
    mean_wait: float
    mean_makespan: float
    mean_turnaround: float
    node_utilization: float
    expands_per_job: float
    shrinks_per_job: float
    job_count: int


@dataclass(frozen=True)
class SeedRun:
    strategy: str
    fraction: float
    seed: int
    metrics: RunMetrics


@dataclass(frozen=True)
class AggregateMetrics:
    strategy: str
    fraction: float
    seeds: tuple[int, ...]
    stats: dict  # metric name -> (mean, q25, q75)


def analysis_window(result: SimResult, warm_up: int = DEFAULT_WARM_UP) -> AnalysisWindow:
    """Window from warm-up end to the last job submission."""
    if not result.outcomes:
        raise MetricsError("empty simulation result")
    end = max(o.submit for o in result.outcomes.values())
    if end <= warm_up:
        raise MetricsError(
            f"trace ends at t={end} before the {warm_up}s warm-up; "
            "shrink --warm-up for short traces"
        )
    return AnalysisWindow(start=warm_up, end=end)


def job_metrics(result: SimResult, window: AnalysisWindow) -> RunMetrics:
    """Per-job means over jobs submitted inside the window (utilization 0)."""
    included = [
        o
        for o in result.outcomes.values()
        if window.start <= o.submit <= window.end
    ]
    if not included:
        raise MetricsError("no jobs submitted inside the analysis window")
    n = len(included)
    sum_wait = sum(o.wait for o in included)
    sum_makespan = sum(o.makespan for o in included)
    mean_wait = sum_wait / n
    mean_makespan = sum_makespan / n
    return RunMetrics(
        mean_wait=mean_wait,
        mean_makespan=mean_makespan,
        mean_turnaround=mean_wait + mean_makespan,
        node_utilization=0.0,
        expands_per_job=sum(o.expand_count for o in included) / n,
        shrinks_per_job=sum(o.shrink_count for o in included) / n,
        job_count=n,
    )


def node_utilization(
    result: SimResult, window: AnalysisWindow, cluster: ClusterConfig
) -> float:
    """Time-averaged fraction of nodes held by running jobs in the window."""
    if window.end <= window.start:
        raise MetricsError("degenerate analysis window")
    series = result.utilization_series
    area = 0
    for i, (t, value) in enumerate(series):
        seg_start = max(t, window.start)
        seg_end = window.end if i + 1 == len(series) else min(series[i + 1][0], window.end)
        if seg_end > seg_start:
            area += value * (seg_end - seg_start)
    return area / (cluster.node_count * (window.end - window.start))


def run_metrics(
    result: SimResult, cluster: ClusterConfig, warm_up: int = DEFAULT_WARM_UP
) -> RunMetrics:
    """Complete per-run metrics (job means plus node utilization)."""
    window = analysis_window(result, warm_up)
    base = job_metrics(result, window)
    util = node_utilization(result, window, cluster)
    return RunMetrics(
        mean_wait=base.mean_wait,
        mean_makespan=base.mean_makespan,
        mean_turnaround=base.mean_turnaround,
        node_utilization=util,
        expands_per_job=base.expands_per_job,
        shrinks_per_job=base.shrinks_per_job,
        job_count=base.job_count,
    )


def quantile(values: list[float], p: float) -> float:
    """Linear-interpolation quantile of unsorted values (see module doc)."""
    if not values:
        raise MetricsError("quantile of empty list")
    if not 0.0 <= p <= 1.0:
        raise MetricsError("p must be in [0, 1]")
    data = sorted(values)
    pos = (len(data) - 1) * p
    i = int(pos)
    frac = pos - i
    if i + 1 < len(data):
        return data[i] + frac * (data[i + 1] - data[i])
    return data[i]


def aggregate(runs: list[SeedRun]) -> AggregateMetrics:
    """Mean and IQR (q25, q75) per metric across seeds of one cell."""
    if not runs:
        raise MetricsError("nothing to aggregate")
    cells = {(r.strategy, r.fraction) for r in runs}
    if len(cells) != 1:
        raise MetricsError(f"mixed (strategy, fraction) inputs: {sorted(cells)}")
    stats = {}
    for name in METRIC_FIELDS:
        values = [getattr(r.metrics, name) for r in runs]
        stats[name] = (
            sum(values) / len(values),
            quantile(values, 0.25),
            quantile(values, 0.75),
        )
    strategy, fraction = runs[0].strategy, runs[0].fraction
    return AggregateMetrics(
        strategy=strategy,
        fraction=fraction,
        seeds=tuple(r.seed for r in runs),
        stats=stats,
    )
