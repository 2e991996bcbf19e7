"""Deterministic tick-driven simulation core.

Scheduling decisions happen only at tick boundaries. Between ticks, jobs
make progress at a rate given by their speedup model (rigid jobs at rate
1), and the engine jumps straight to the next tick at which anything can
change: an arrival becomes visible, a completion frees nodes, or a
pending resize takes effect. Job completions are interpolated to the
exact second inside a tick, but the freed nodes are only schedulable at
the following tick boundary.

Ordering within one tick boundary t:

  1. completions with interpolated end <= t release their nodes,
  2. resizes decided at the previous tick take effect,
  3. arrivals with submit <= t join the queue,
  4. the strategy decides: starts apply at t, resizes at the next tick.

That makes a shrink's freed nodes allocatable exactly one tick after the
decision, which stands in for reconfiguration overhead. Everything is a
pure function of (workload, cluster, strategy): two runs produce
bit-identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

from . import strategies as strat
from .malleability import MalleableJobSpec, MixedWorkload, WorkloadEntry
from .speedup import SpeedupModel
from .strategies import (
    QueuedJobView,
    RunningJobView,
    SchedulerView,
    StrategyId,
    TickDecisions,
)
from .workload import RigidJobSpec

RESULT_VERSION = 1
_EPS = 1e-6

StrategyFn = Callable[[SchedulerView], TickDecisions]


class InfeasibleWorkloadError(ValueError):
    """A job can never be started on the configured cluster."""


class StrategyConformanceError(RuntimeError):
    """A strategy emitted decisions the engine contract forbids."""


@dataclass(frozen=True)
class ClusterConfig:
    node_count: int
    tick_seconds: int

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.tick_seconds < 1:
            raise ValueError("tick_seconds must be >= 1")


@dataclass(slots=True)
class RunningJob:
    """Mutable per-job simulation state."""

    id: str
    submit: int
    start: int
    current_nodes: int
    remaining: float  # node-equivalent work (malleable) or wall seconds (rigid)
    malleable: bool
    min_nodes: int
    pref_nodes: int
    max_nodes: int
    time_limit: int
    model: SpeedupModel | None
    rate: float = 1.0
    allocation_history: list[tuple[int, int]] = field(default_factory=list)
    expand_count: int = 0
    shrink_count: int = 0

    def advance(self, dt: int) -> None:
        """Consume dt seconds of progress at the current rate."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        self.remaining -= self.rate * dt

    def seconds_to_completion(self) -> int:
        """Whole seconds until remaining work reaches zero at current rate."""
        return max(1, math.ceil(self.remaining / self.rate - _EPS))

    def set_allocation(self, now: int, nodes: int) -> None:
        if nodes > self.current_nodes:
            self.expand_count += 1
        elif nodes < self.current_nodes:
            self.shrink_count += 1
        else:
            return
        self.current_nodes = nodes
        self.rate = self.model.speedup(nodes) if self.malleable else 1.0
        self.allocation_history.append((now, nodes))


@dataclass(frozen=True)
class JobOutcome:
    id: str
    submit: int
    start: int
    end: int
    expand_count: int
    shrink_count: int
    allocation_history: tuple[tuple[int, int], ...]

    @property
    def wait(self) -> int:
        return self.start - self.submit

    @property
    def makespan(self) -> int:
        return self.end - self.start

    @property
    def turnaround(self) -> int:
        return self.end - self.submit


@dataclass(frozen=True)
class SimResult:
    outcomes: dict[str, JobOutcome]
    utilization_series: tuple[tuple[int, int], ...]
    queue_series: tuple[tuple[int, int], ...]
    cluster: ClusterConfig
    strategy: str
    meta: dict

    def schedule_dict(self) -> dict:
        """The schedule itself (no config echo), for equivalence checks."""
        return {
            "outcomes": [
                {
                    "id": o.id,
                    "submit": o.submit,
                    "start": o.start,
                    "end": o.end,
                    "expands": o.expand_count,
                    "shrinks": o.shrink_count,
                    "allocations": [list(x) for x in o.allocation_history],
                }
                for _, o in sorted(self.outcomes.items())
            ],
            "utilization": [list(x) for x in self.utilization_series],
            "queue": [list(x) for x in self.queue_series],
        }

    def to_dict(self) -> dict:
        doc = {
            "version": RESULT_VERSION,
            "cluster": {
                "node_count": self.cluster.node_count,
                "tick_seconds": self.cluster.tick_seconds,
            },
            "strategy": self.strategy,
            "meta": self.meta,
        }
        doc.update(self.schedule_dict())
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def write_series(self, directory) -> None:
        """Export utilization and queue series as 2-column (time, value) data."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, series in (
            ("utilization", self.utilization_series),
            ("queue", self.queue_series),
        ):
            with open(directory / f"{name}.dat", "w", encoding="utf-8") as fh:
                fh.write(f"# time {name}\n")
                for t, value in series:
                    fh.write(f"{t} {value}\n")


def _entry_fields(entry: WorkloadEntry) -> tuple[RigidJobSpec, bool, MalleableJobSpec | None]:
    if isinstance(entry, MalleableJobSpec):
        return entry.base, True, entry
    return entry, False, None


def _queued_view(entry: WorkloadEntry) -> QueuedJobView:
    base, malleable, mall = _entry_fields(entry)
    if malleable:
        return QueuedJobView(
            id=base.id,
            submit=base.submit_time,
            min_nodes=mall.min_nodes,
            pref_nodes=mall.pref_nodes,
            max_nodes=mall.max_nodes,
            time_limit=base.time_limit,
            malleable=True,
            model=mall.model,
        )
    return QueuedJobView(
        id=base.id,
        submit=base.submit_time,
        min_nodes=base.requested_nodes,
        pref_nodes=base.requested_nodes,
        max_nodes=base.requested_nodes,
        time_limit=base.time_limit,
        malleable=False,
    )


class _Series:
    """Step-function sample collector; collapses same-time samples."""

    def __init__(self, t0: int, v0: int):
        self.samples: list[tuple[int, int]] = [(t0, v0)]

    def record(self, t: int, value: int) -> None:
        last_t, last_v = self.samples[-1]
        if value == last_v:
            return
        if t == last_t:
            self.samples[-1] = (t, value)
            if len(self.samples) >= 2 and self.samples[-2][1] == value:
                self.samples.pop()
        else:
            self.samples.append((t, value))


class Simulation:
    """Single simulation run. Use run_simulation() unless stepping manually."""

    def __init__(
        self,
        workload: MixedWorkload,
        cluster: ClusterConfig,
        strategy: StrategyId | StrategyFn,
        meta: dict | None = None,
        trace: Callable[[SchedulerView, TickDecisions], None] | None = None,
    ):
        self.cluster = cluster
        self.strategy = strategy
        self.trace = trace
        self.meta = dict(meta or {})
        self._decide: StrategyFn
        if isinstance(strategy, StrategyId):
            self._decide = lambda view: strat.decide(view, strategy)
            self.strategy_name = strategy.value
        else:
            self._decide = strategy
            self.strategy_name = getattr(strategy, "__name__", "custom")
        entries = sorted(
            workload.entries, key=lambda e: (_entry_fields(e)[0].submit_time, _entry_fields(e)[0].id)
        )
        self._validate(entries)
        self._work_by_id = {
            _entry_fields(e)[0].id: (
                e.total_work
                if isinstance(e, MalleableJobSpec)
                else float(_entry_fields(e)[0].runtime)
            )
            for e in entries
        }
        self.pending: list[QueuedJobView] = [_queued_view(e) for e in entries]
        self.queue: list[QueuedJobView] = []
        self.running: dict[str, RunningJob] = {}
        self.pending_resizes: dict[str, int] = {}
        self.outcomes: dict[str, JobOutcome] = {}
        self.total_alloc = 0
        self.now = 0
        self.util = _Series(0, 0)
        self.qlen = _Series(0, 0)
        self._emitted_last = False

    def _validate(self, entries: list[WorkloadEntry]) -> None:
        cap = self.cluster.node_count
        bad: list[str] = []
        for e in entries:
            base, malleable, mall = _entry_fields(e)
            if malleable:
                required = mall.min_nodes
                if isinstance(self.strategy, StrategyId):
                    required = strat.start_threshold(_queued_view(e), self.strategy)
            else:
                required = base.requested_nodes
            if required > cap:
                bad.append(base.id)
        if bad:
            raise InfeasibleWorkloadError(
                f"jobs cannot start on a {cap}-node cluster: {bad}"
            )
        ids = [(_entry_fields(e)[0].id) for e in entries]
        if len(set(ids)) != len(ids):
            raise InfeasibleWorkloadError("duplicate job ids in workload")

    @property
    def free_nodes(self) -> int:
        return self.cluster.node_count - self.total_alloc

    def _tick_ceil(self, t: int) -> int:
        tick = self.cluster.tick_seconds
        return ((t + tick - 1) // tick) * tick

    def _next_wake(self) -> int | None:
        candidates: list[int] = []
        if self.pending_resizes or self._emitted_last:
            candidates.append(self.now + self.cluster.tick_seconds)
        if self.pending:
            candidates.append(self._tick_ceil(self.pending[0].submit))
        for job in self.running.values():
            candidates.append(self._tick_ceil(self.now + job.seconds_to_completion()))
        if not candidates:
            return None
        return min(candidates)

    def _process_completions(self, t: int) -> None:
        done: list[tuple[int, str]] = []
        dt = t - self.now
        for job in self.running.values():
            eta = self.now + job.seconds_to_completion()
            if eta <= t:
                done.append((eta, job.id))
            elif dt > 0:
                job.advance(dt)
        for eta, jid in sorted(done):
            job = self.running.pop(jid)
            self.total_alloc -= job.current_nodes
            self.pending_resizes.pop(jid, None)
            self.outcomes[jid] = JobOutcome(
                id=jid,
                submit=job.submit,
                start=job.start,
                end=eta,
                expand_count=job.expand_count,
                shrink_count=job.shrink_count,
                allocation_history=tuple(job.allocation_history),
            )

    def _apply_pending_resizes(self, t: int) -> None:
        if not self.pending_resizes:
            return
        delta = sum(
            target - self.running[jid].current_nodes
            for jid, target in self.pending_resizes.items()
            if jid in self.running
        )
        if self.total_alloc + delta > self.cluster.node_count:
            raise StrategyConformanceError(
                f"t={t}: pending resizes over-allocate the cluster"
            )
        for jid, target in sorted(self.pending_resizes.items()):
            job = self.running.get(jid)
            if job is None:
                continue
            self.total_alloc += target - job.current_nodes
            job.set_allocation(t, target)
        self.pending_resizes.clear()

    def _admit_arrivals(self, t: int) -> None:
        while self.pending and self.pending[0].submit <= t:
            self.queue.append(self.pending.pop(0))

    def _predicted_end(self, t: int, job: RunningJob) -> int:
        if job.malleable and job.current_nodes != job.pref_nodes:
            scale = job.model.speedup(job.pref_nodes) / job.model.speedup(job.current_nodes)
            bound = math.ceil(job.time_limit * scale - _EPS)
        else:
            bound = job.time_limit
        return max(job.start + bound, t + 1)

    def _build_view(self, t: int) -> SchedulerView:
        running_views = tuple(
            RunningJobView(
                id=job.id,
                submit=job.submit,
                current_nodes=job.current_nodes,
                min_nodes=job.min_nodes,
                pref_nodes=job.pref_nodes,
                max_nodes=job.max_nodes,
                malleable=job.malleable,
                predicted_end=self._predicted_end(t, job),
            )
            for _, job in sorted(self.running.items())
        )
        return SchedulerView(
            now=t,
            tick=self.cluster.tick_seconds,
            free_nodes=self.free_nodes,
            cluster_nodes=self.cluster.node_count,
            queue=tuple(self.queue),
            running=running_views,
        )

    def _apply_starts(self, t: int, decisions: TickDecisions) -> None:
        queued = {q.id: q for q in self.queue}
        for start in decisions.starts:
            q = queued.get(start.job_id)
            if q is None:
                raise StrategyConformanceError(
                    f"t={t}: start for job {start.job_id} which is not queued"
                )
            if not q.min_nodes <= start.nodes <= q.max_nodes:
                raise StrategyConformanceError(
                    f"t={t}: start of {q.id} at {start.nodes} nodes violates "
                    f"[{q.min_nodes}, {q.max_nodes}]"
                )
            if start.nodes > self.free_nodes:
                raise StrategyConformanceError(
                    f"t={t}: start of {q.id} needs {start.nodes} nodes, "
                    f"only {self.free_nodes} free"
                )
            job = RunningJob(
                id=q.id,
                submit=q.submit,
                start=t,
                current_nodes=start.nodes,
                remaining=self._work_by_id[q.id],
                malleable=q.malleable,
                min_nodes=q.min_nodes,
                pref_nodes=q.pref_nodes,
                max_nodes=q.max_nodes,
                time_limit=q.time_limit,
                model=q.model,
            )
            job.rate = q.model.speedup(start.nodes) if q.malleable else 1.0
            job.allocation_history.append((t, start.nodes))
            self.running[q.id] = job
            self.total_alloc += start.nodes
            self.queue.remove(q)

    def _queue_resizes(self, t: int, decisions: TickDecisions) -> None:
        deltas = 0
        for rz in decisions.resizes:
            job = self.running.get(rz.job_id)
            if job is None:
                raise StrategyConformanceError(
                    f"t={t}: resize for job {rz.job_id} which is not running"
                )
            if not job.malleable:
                raise StrategyConformanceError(f"t={t}: resize of rigid job {job.id}")
            if not job.min_nodes <= rz.nodes <= job.max_nodes:
                raise StrategyConformanceError(
                    f"t={t}: resize of {job.id} to {rz.nodes} violates "
                    f"[{job.min_nodes}, {job.max_nodes}]"
                )
            if rz.nodes == job.current_nodes:
                continue
            deltas += rz.nodes - job.current_nodes
            self.pending_resizes[rz.job_id] = rz.nodes
        if self.total_alloc + deltas > self.cluster.node_count:
            raise StrategyConformanceError(
                f"t={t}: resize decisions over-allocate the cluster"
            )

    def run(self) -> SimResult:
        wake = self._next_wake()
        while wake is not None:
            t = wake
            self._process_completions(t)
            self._apply_pending_resizes(t)
            self._admit_arrivals(t)
            self.now = t
            view = self._build_view(t)
            decisions = self._decide(view)
            self._apply_starts(t, decisions)
            self._queue_resizes(t, decisions)
            if self.trace is not None:
                self.trace(view, decisions)
            self._emitted_last = bool(decisions.starts or decisions.resizes)
            self.util.record(t, self.total_alloc)
            self.qlen.record(t, len(self.queue))
            if not (self.pending or self.queue or self.running):
                break
            wake = self._next_wake()
            if wake is None and (self.pending or self.queue or self.running):
                raise StrategyConformanceError(
                    f"t={t}: simulation stalled with work outstanding"
                )
        return SimResult(
            outcomes=self.outcomes,
            utilization_series=tuple(self.util.samples),
            queue_series=tuple(self.qlen.samples),
            cluster=self.cluster,
            strategy=self.strategy_name,
            meta=self.meta,
        )


def run_simulation(
    workload: MixedWorkload,
    cluster: ClusterConfig,
    strategy: StrategyId | StrategyFn,
    meta: dict | None = None,
    trace: Callable[[SchedulerView, TickDecisions], None] | None = None,
) -> SimResult:
    """Simulate one workload under one strategy. Deterministic."""
    return Simulation(workload, cluster, strategy, meta=meta, trace=trace).run()
