"""Rigid-to-malleable job transformation.

A malleable job carries node bounds (min/pref/max) derived from a speedup
model plus efficiency thresholds, and a total work quantity calibrated so
that running at the preferred allocation for the whole job reproduces the
recorded runtime. Selection of which jobs become malleable is seeded and
reproducible (see rng module for the generator contract).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rng import SplitMix64
from .speedup import SpeedupModel
from .workload import RigidJobSpec


@dataclass(frozen=True)
class EfficiencyThresholds:
    """Knobs for the node-bounds derivation.

    min_efficiency_for_max: a job may grow while efficiency stays at or
    above this value. shrink_floor_ratio: min_nodes is this fraction of
    the requested nodes, rounded up, floored at 1.
    """

    min_efficiency_for_max: float = 0.5
    shrink_floor_ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.min_efficiency_for_max <= 1.0:
            raise ValueError("min_efficiency_for_max must be in (0, 1]")
        if not 0.0 < self.shrink_floor_ratio <= 1.0:
            raise ValueError("shrink_floor_ratio must be in (0, 1]")

    def params(self) -> dict:
        return {
            "min_efficiency_for_max": self.min_efficiency_for_max,
            "shrink_floor_ratio": self.shrink_floor_ratio,
        }


@dataclass(frozen=True)
class MalleableJobSpec:
    """A rigid job augmented with node bounds and calibrated work."""

    base: RigidJobSpec
    min_nodes: int
    pref_nodes: int
    max_nodes: int
    total_work: float
    model: SpeedupModel

    def __post_init__(self):
        if not 1 <= self.min_nodes <= self.pref_nodes <= self.max_nodes:
            raise ValueError(
                f"job {self.base.id}: bounds not ordered: "
                f"{self.min_nodes}/{self.pref_nodes}/{self.max_nodes}"
            )

    @property
    def id(self) -> str:
        return self.base.id

    @property
    def submit_time(self) -> int:
        return self.base.submit_time


WorkloadEntry = RigidJobSpec | MalleableJobSpec


@dataclass(frozen=True)
class MixedWorkload:
    """A job list where a seeded fraction has been made malleable."""

    entries: tuple[WorkloadEntry, ...]
    malleable_fraction: float
    seed: int

    @property
    def malleable_count(self) -> int:
        return sum(1 for e in self.entries if isinstance(e, MalleableJobSpec))

    def to_dict(self, cluster_nodes: int, thresholds: EfficiencyThresholds) -> dict:
        """Serializable form; model params are echoed in the header."""
        model = next(
            (e.model for e in self.entries if isinstance(e, MalleableJobSpec)), None
        )
        jobs = []
        for e in self.entries:
            base = e.base if isinstance(e, MalleableJobSpec) else e
            item = {
                "id": base.id,
                "submit": base.submit_time,
                "nodes": base.requested_nodes,
                "runtime": base.runtime,
                "time_limit": base.time_limit,
            }
            if isinstance(e, MalleableJobSpec):
                item["malleable"] = {
                    "min": e.min_nodes,
                    "pref": e.pref_nodes,
                    "max": e.max_nodes,
                    "total_work": e.total_work,
                }
            jobs.append(item)
        return {
            "version": 1,
            "malleable_fraction": self.malleable_fraction,
            "seed": self.seed,
            "cluster_nodes": cluster_nodes,
            "model": model.params() if model is not None else None,
            "thresholds": thresholds.params(),
            "jobs": jobs,
        }


def mixed_workload_from_dict(data: dict) -> MixedWorkload:
    """Rebuild a MixedWorkload from its to_dict() form."""
    from .speedup import model_from_config
    from .workload import RigidJobSpec as _Rigid

    model = model_from_config(data["model"]) if data.get("model") else None
    entries: list[WorkloadEntry] = []
    for item in data["jobs"]:
        base = _Rigid(
            id=item["id"],
            submit_time=int(item["submit"]),
            requested_nodes=int(item["nodes"]),
            runtime=int(item["runtime"]),
            time_limit=int(item["time_limit"]),
        )
        mall = item.get("malleable")
        if mall is None:
            entries.append(base)
        else:
            if model is None:
                raise ValueError("malleable jobs present but no model in header")
            entries.append(
                MalleableJobSpec(
                    base=base,
                    min_nodes=int(mall["min"]),
                    pref_nodes=int(mall["pref"]),
                    max_nodes=int(mall["max"]),
                    total_work=float(mall["total_work"]),
                    model=model,
                )
            )
    return MixedWorkload(
        entries=tuple(entries),
        malleable_fraction=float(data["malleable_fraction"]),
        seed=int(data["seed"]),
    )


def derive_node_bounds(
    job: RigidJobSpec,
    model: SpeedupModel,
    thresholds: EfficiencyThresholds,
    cluster_nodes: int,
) -> tuple[int, int, int]:
    """Assign (min, pref, max) node bounds for one job.

    pref is the trace's requested count. max is the largest node count
    within the cluster whose efficiency stays at or above the threshold
    (integer granularity, found by bisection over the non-increasing
    efficiency curve), never below pref. min is the shrink floor.
    """
    if job.requested_nodes > cluster_nodes:
        raise ValueError(
            f"job {job.id} requests {job.requested_nodes} nodes "
            f"but the cluster has {cluster_nodes}"
        )
    pref = job.requested_nodes
    min_nodes = max(1, math.ceil(thresholds.shrink_floor_ratio * pref))
    tau = thresholds.min_efficiency_for_max
    lo, hi = 1, cluster_nodes  # efficiency(lo) = S(1)/1 = 1 >= tau
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if model.efficiency(mid) >= tau:
            lo = mid
        else:
            hi = mid - 1
    max_nodes = max(pref, lo)
    return min_nodes, pref, max_nodes


def to_malleable(
    job: RigidJobSpec, bounds: tuple[int, int, int], model: SpeedupModel
) -> MalleableJobSpec:
    """Attach bounds and calibrate total work to the recorded runtime."""
    min_nodes, pref, max_nodes = bounds
    return MalleableJobSpec(
        base=job,
        min_nodes=min_nodes,
        pref_nodes=pref,
        max_nodes=max_nodes,
        total_work=job.runtime * model.speedup(pref),
        model=model,
    )


def conversion_count(total: int, fraction: float) -> int:
    """round(fraction * total), half away from zero, documented and fixed."""
    return int(math.floor(fraction * total + 0.5))


def transform_workload(
    jobs: list[RigidJobSpec],
    fraction: float,
    seed: int,
    model: SpeedupModel,
    thresholds: EfficiencyThresholds,
    cluster_nodes: int,
) -> MixedWorkload:
    """Convert a seeded uniform sample of jobs to malleable form.

    Exactly round(fraction * len(jobs)) jobs are selected without
    replacement via SplitMix64(seed); job order is preserved. fraction 0
    returns the all-rigid workload, fraction 1 the all-malleable one.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    oversized = [j.id for j in jobs if j.requested_nodes > cluster_nodes]
    if oversized:
        raise ValueError(
            f"jobs exceed the {cluster_nodes}-node cluster: {oversized}"
        )
    k = conversion_count(len(jobs), fraction)
    chosen = set(SplitMix64(seed).sample_indices(len(jobs), k))
    entries: list[WorkloadEntry] = []
    for i, job in enumerate(jobs):
        if i in chosen:
            bounds = derive_node_bounds(job, model, thresholds, cluster_nodes)
            entries.append(to_malleable(job, bounds, model))
        else:
            entries.append(job)
    return MixedWorkload(
        entries=tuple(entries), malleable_fraction=fraction, seed=seed
    )
