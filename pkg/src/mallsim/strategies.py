"""Scheduling strategies: rigid EASY-backfill and four malleable variants.

All strategies are pure functions of a per-tick SchedulerView and return
TickDecisions. Starts take effect at the current tick; resizes take
effect at the next tick (the engine enforces that latency).

The malleable strategies run a three-step procedure each tick:

  Step 1  Start waiting jobs with EASY-backfill. The start size depends
          on the strategy: MIN and AVG start jobs at their minimum nodes,
          PREF tries the preferred count and falls back to the largest
          feasible size down to the minimum, KEEP_PREF starts only at the
          preferred count.

  Step 2  If idle nodes remain but the queue head cannot start, shrink
          running malleable jobs in descending priority order until the
          head fits (at the next tick, when freed nodes materialize).
          MIN, PREF and KEEP_PREF shrink the fewest jobs needed, taking
          exactly the missing amount; AVG rebalances with repeated
          single-node shrinks from the currently highest-priority job.
          KEEP_PREF only shrinks jobs above their preferred count and
          never below it; the others shrink down to the minimum. If even
          shrinking everything to its floor cannot fit the head, nothing
          is shrunk.

  Step 3  Remaining idle nodes (those not earmarked for a blocked head)
          expand running malleable jobs in ascending priority order, each
          up to its maximum. MIN, PREF and KEEP_PREF fill one job at a
          time; AVG hands out single nodes to the currently lowest
          priority job, recomputing priorities after each grant.

Priorities:
    MIN        current - min            (surplus over the floor)
    PREF/KEEP  current - pref           (signed distance from preferred)
    AVG        (current - min) / (max - min), 0 if max == min

Ties are broken by ascending (submit_time, id) everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .speedup import SpeedupModel


class StrategyId(Enum):
    EASY_BACKFILL = "easy-backfill"
    MIN = "min"
    PREF = "pref"
    AVG = "avg"
    KEEP_PREF = "keep-pref"

    @classmethod
    def from_name(cls, name: str) -> "StrategyId":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown strategy: {name!r}")

    @property
    def malleable(self) -> bool:
        return self is not StrategyId.EASY_BACKFILL


@dataclass(frozen=True)
class QueuedJobView:
    """A waiting job as the strategy sees it. For rigid jobs min = pref = max."""

    id: str
    submit: int
    min_nodes: int
    pref_nodes: int
    max_nodes: int
    time_limit: int
    malleable: bool
    model: SpeedupModel | None = None


@dataclass(frozen=True)
class RunningJobView:
    """A running job as the strategy sees it."""

    id: str
    submit: int
    current_nodes: int
    min_nodes: int
    pref_nodes: int
    max_nodes: int
    malleable: bool
    predicted_end: int


@dataclass(frozen=True)
class SchedulerView:
    now: int
    tick: int
    free_nodes: int
    cluster_nodes: int
    queue: tuple[QueuedJobView, ...]
    running: tuple[RunningJobView, ...]


@dataclass(frozen=True)
class StartDecision:
    job_id: str
    nodes: int


@dataclass(frozen=True)
class ResizeDecision:
    job_id: str
    nodes: int  # target allocation at the next tick


@dataclass(frozen=True)
class TickDecisions:
    starts: tuple[StartDecision, ...]
    resizes: tuple[ResizeDecision, ...]
    blocked_head: str | None  # queue head left waiting, if any


def priority(job: RunningJobView, strategy: StrategyId) -> float:
    """Resize priority of a running malleable job (see module docstring)."""
    if strategy is StrategyId.EASY_BACKFILL:
        raise ValueError("EASY-backfill has no resize priorities")
    if not job.malleable:
        raise ValueError(f"job {job.id} is rigid")
    if strategy is StrategyId.MIN:
        return float(job.current_nodes - job.min_nodes)
    if strategy in (StrategyId.PREF, StrategyId.KEEP_PREF):
        return float(job.current_nodes - job.pref_nodes)
    if job.max_nodes == job.min_nodes:
        return 0.0
    return (job.current_nodes - job.min_nodes) / (job.max_nodes - job.min_nodes)


def start_threshold(job: QueuedJobView, strategy: StrategyId) -> int:
    """Smallest allocation the strategy will start this job with."""
    if not job.malleable:
        return job.pref_nodes
    if strategy is StrategyId.KEEP_PREF or strategy is StrategyId.EASY_BACKFILL:
        return job.pref_nodes
    return job.min_nodes


def _start_allocation(job: QueuedJobView, strategy: StrategyId, available: int) -> int:
    if not job.malleable or strategy in (StrategyId.KEEP_PREF, StrategyId.EASY_BACKFILL):
        return job.pref_nodes
    if strategy is StrategyId.PREF:
        return min(job.pref_nodes, available)  # largest feasible in [min, pref]
    return job.min_nodes  # MIN and AVG start at the floor


def runtime_bound(job: QueuedJobView, allocation: int) -> int:
    """Conservative wall-time bound at a given allocation, for reservations.

    Rigid jobs: the user time limit. Malleable jobs: the limit scaled by
    speedup(pref)/speedup(allocation), since the limit describes a run at
    the preferred size.
    """
    if not job.malleable or allocation == job.pref_nodes:
        return job.time_limit
    scale = job.model.speedup(job.pref_nodes) / job.model.speedup(allocation)
    return math.ceil(job.time_limit * scale - 1e-9)


def _shrink_floor(job: RunningJobView, strategy: StrategyId) -> int:
    return job.pref_nodes if strategy is StrategyId.KEEP_PREF else job.min_nodes


def _desc_order(jobs, strategy):
    return sorted(jobs, key=lambda r: (-priority(r, strategy), r.submit, r.id))


def _asc_order(jobs, strategy):
    return sorted(jobs, key=lambda r: (priority(r, strategy), r.submit, r.id))


def step2_trigger(view: SchedulerView, strategy: StrategyId) -> bool:
    """True when idle nodes exist but the queue head cannot start.

    Expects a view reflecting the state after Step 1 (starts applied).
    """
    if view.free_nodes <= 0 or not view.queue:
        return False
    return start_threshold(view.queue[0], strategy) > view.free_nodes


def easy_backfill(view: SchedulerView) -> list[StartDecision]:
    """Rigid EASY-backfill: FCFS plus reservation-safe backfilling."""
    starts, _, _ = _start_pass(view, StrategyId.EASY_BACKFILL)
    return starts


def _start_pass(
    view: SchedulerView, strategy: StrategyId
) -> tuple[list[StartDecision], QueuedJobView | None, int]:
    """Step 1. Returns (starts, blocked head view or None, free after starts).

    Greedily starts queue heads while they fit. When the head cannot
    start, a reservation time R is computed from the predicted ends of
    running jobs (earliest time enough nodes accumulate for the head) and
    later queued jobs are started only if they fit now and either finish
    by R or leave the head's reservation intact (shadow nodes).
    """
    free = view.free_nodes
    starts: list[StartDecision] = []
    # (predicted_end, nodes) for every job that will hold nodes after this tick
    holders: list[tuple[int, int]] = [
        (r.predicted_end, r.current_nodes) for r in view.running
    ]
    queue = list(view.queue)
    while queue:
        head = queue[0]
        if start_threshold(head, strategy) > free:
            break
        alloc = _start_allocation(head, strategy, free)
        starts.append(StartDecision(head.id, alloc))
        holders.append((view.now + runtime_bound(head, alloc), alloc))
        free -= alloc
        queue.pop(0)

    if not queue:
        return starts, None, free

    head = queue[0]
    need = start_threshold(head, strategy)
    reservation = None
    acc = free
    for end, nodes in sorted(holders):
        acc += nodes
        if acc >= need:
            reservation = end
            break
    if reservation is not None:
        # spare nodes at R count every job predicted to end by R,
        # including ends tied with R itself
        at_reservation = free + sum(n for e, n in holders if e <= reservation)
        shadow = at_reservation - need
    if reservation is None:
        # head needs more than the whole cluster; engine validation
        # prevents this, but fail safe: no backfilling.
        return starts, head, free

    for cand in queue[1:]:
        if free <= 0:
            break
        if start_threshold(cand, strategy) > free:
            continue
        alloc = _start_allocation(cand, strategy, free)
        if view.now + runtime_bound(cand, alloc) <= reservation:
            starts.append(StartDecision(cand.id, alloc))
            free -= alloc
            continue
        cap = min(free, shadow)
        if start_threshold(cand, strategy) <= cap:
            alloc = _start_allocation(cand, strategy, cap)
            starts.append(StartDecision(cand.id, alloc))
            free -= alloc
            shadow -= alloc
    return starts, head, free


def _shrink_pass(
    view: SchedulerView, strategy: StrategyId, need: int, free: int
) -> tuple[dict[str, int], int]:
    """Step 2. Returns ({job_id: target_nodes}, total freed next tick)."""
    gap = need - free
    eligible = [
        r
        for r in view.running
        if r.malleable and r.current_nodes > _shrink_floor(r, strategy)
    ]
    capacity = sum(r.current_nodes - _shrink_floor(r, strategy) for r in eligible)
    if gap <= 0 or capacity < gap:
        return {}, 0
    targets: dict[str, int] = {}
    if strategy is StrategyId.AVG:
        current = {r.id: r.current_nodes for r in eligible}
        by_id = {r.id: r for r in eligible}
        freed = 0
        while freed < gap:
            pick = None
            pick_key = None
            for r in eligible:
                if current[r.id] <= r.min_nodes:
                    continue
                value = (current[r.id] - r.min_nodes) / (r.max_nodes - r.min_nodes) \
                    if r.max_nodes > r.min_nodes else 0.0
                key = (-value, r.submit, r.id)
                if pick is None or key < pick_key:
                    pick, pick_key = r, key
            current[pick.id] -= 1
            freed += 1
        for r in eligible:
            if current[r.id] != by_id[r.id].current_nodes:
                targets[r.id] = current[r.id]
        # emission order: descending initial priority
        ordered = [r.id for r in _desc_order(eligible, strategy) if r.id in targets]
        return {jid: targets[jid] for jid in ordered}, gap
    freed = 0
    for r in _desc_order(eligible, strategy):
        take = min(gap - freed, r.current_nodes - _shrink_floor(r, strategy))
        if take <= 0:
            continue
        targets[r.id] = r.current_nodes - take
        freed += take
        if freed >= gap:
            break
    return targets, freed


def _expand_pass(
    view: SchedulerView, strategy: StrategyId, budget: int, exclude: set[str]
) -> dict[str, int]:
    """Step 3. Returns {job_id: target_nodes} consuming up to budget nodes."""
    eligible = [
        r
        for r in view.running
        if r.malleable and r.current_nodes < r.max_nodes and r.id not in exclude
    ]
    if budget <= 0 or not eligible:
        return {}
    targets: dict[str, int] = {}
    if strategy is StrategyId.AVG:
        current = {r.id: r.current_nodes for r in eligible}
        left = budget
        while left > 0:
            pick = None
            pick_key = None
            for r in eligible:
                if current[r.id] >= r.max_nodes:
                    continue
                value = (current[r.id] - r.min_nodes) / (r.max_nodes - r.min_nodes) \
                    if r.max_nodes > r.min_nodes else 0.0
                key = (value, r.submit, r.id)
                if pick is None or key < pick_key:
                    pick, pick_key = r, key
            if pick is None:
                break
            current[pick.id] += 1
            left -= 1
        for r in eligible:
            if current[r.id] != r.current_nodes:
                targets[r.id] = current[r.id]
        ordered = [r.id for r in _asc_order(eligible, strategy) if r.id in targets]
        return {jid: targets[jid] for jid in ordered}
    left = budget
    for r in _asc_order(eligible, strategy):
        grant = min(left, r.max_nodes - r.current_nodes)
        if grant <= 0:
            continue
        targets[r.id] = r.current_nodes + grant
        left -= grant
        if left <= 0:
            break
    return targets


def malleable_tick(view: SchedulerView, strategy: StrategyId) -> TickDecisions:
    """Run Steps 1-3 for one tick of a malleable strategy."""
    if strategy is StrategyId.EASY_BACKFILL:
        raise ValueError("use easy_backfill() for the rigid baseline")
    starts, blocked, free = _start_pass(view, strategy)
    resizes: dict[str, int] = {}
    freed = 0
    if blocked is not None and free > 0:
        need = start_threshold(blocked, strategy)
        resizes, freed = _shrink_pass(view, strategy, need, free)
    if blocked is None:
        budget = free
    elif freed > 0:
        budget = free + freed - start_threshold(blocked, strategy)
    else:
        # No shrinks were emitted. If the head cannot fit even with every
        # eligible job at its floor, expansion cannot hurt it (shrinkable
        # surplus grows by exactly what expansion consumes); otherwise the
        # idle nodes stay earmarked for the head.
        shrinkable = sum(
            r.current_nodes - _shrink_floor(r, strategy)
            for r in view.running
            if r.malleable and r.current_nodes > _shrink_floor(r, strategy)
        )
        if free + shrinkable < start_threshold(blocked, strategy):
            budget = free
        else:
            budget = 0
    if budget > 0:
        expansions = _expand_pass(view, strategy, budget, set(resizes))
        resizes.update(expansions)
    return TickDecisions(
        starts=tuple(starts),
        resizes=tuple(ResizeDecision(jid, n) for jid, n in resizes.items()),
        blocked_head=blocked.id if blocked is not None else None,
    )


def decide(view: SchedulerView, strategy: StrategyId) -> TickDecisions:
    """Strategy dispatch: one decision list per tick."""
    if strategy is StrategyId.EASY_BACKFILL:
        starts, blocked, _ = _start_pass(view, strategy)
        return TickDecisions(
            starts=tuple(starts),
            resizes=(),
            blocked_head=blocked.id if blocked is not None else None,
        )
    return malleable_tick(view, strategy)
