"""Trace ingestion and the cleaning pipeline.

Raw accounting dumps from production clusters arrive in per-site CSV
schemas and suffer from two artifacts that inflate apparent utilization:
jobs recorded as multiple daily segments, and node-sharing (oversubscribed)
jobs. The pipeline here is: parse -> merge split entries -> drop
shared-node jobs -> finalize (fill missing time limits) -> optional window
selection -> canonical JSON.

All times are integer seconds. The canonical job file is::

    {"version": 1, "jobs": [
        {"id": str, "submit": int, "nodes": int,
         "runtime": int, "time_limit": int}, ...]}

with jobs sorted by (submit, id).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

log = logging.getLogger(__name__)

CANONICAL_VERSION = 1


class WorkloadError(ValueError):
    """Invalid workload data or dialect configuration."""


@dataclass(frozen=True)
class RawTraceRecord:
    """One row of a raw trace, before cleaning."""

    record_id: str
    job_key: str
    submit_time: int
    runtime: int
    nodes_allocated: int
    shared_node_flag: bool = False
    start_time: int | None = None
    time_limit: int | None = None


@dataclass(frozen=True)
class RigidJobSpec:
    """A cleaned trace job: fixed node count, observed runtime."""

    id: str
    submit_time: int
    requested_nodes: int
    runtime: int
    time_limit: int


_DURATION_SCALE = {"seconds": 1, "minutes": 60, "hours": 3600}
_TRUE_DEFAULT = ("1", "true", "yes", "shared")


@dataclass(frozen=True)
class TraceDialect:
    """Column mapping from a source CSV onto RawTraceRecord fields.

    ``record_id``, ``submit_time``, ``runtime`` and ``nodes`` are mandatory
    column names. ``job_key`` defaults to the record_id column (sites that
    split jobs across days keep a stable key there). Optional columns may
    be None. ``constants`` supplies fixed values for fields without a
    column.

    Times: ``time_format`` is "epoch" (integer seconds) or "iso8601"
    (naive timestamps are taken as UTC). ``duration_unit`` scales runtime
    and time-limit columns.

    Shared-node detection (``shared_mode``):
      * "none"         -- nothing is flagged.
      * "flag"         -- ``shared_column`` holds a truthy marker
                          (one of ``shared_true_values``, case-insensitive).
      * "cpu-fraction" -- ``shared_column`` holds allocated CPUs; a row is
                          shared when that is not a whole multiple of
                          ``cpus_per_node``.
    """

    record_id: str
    submit_time: str
    runtime: str
    nodes: str
    job_key: str | None = None
    start_time: str | None = None
    time_limit: str | None = None
    time_format: str = "epoch"
    duration_unit: str = "seconds"
    shared_mode: str = "none"
    shared_column: str | None = None
    shared_true_values: tuple[str, ...] = _TRUE_DEFAULT
    cpus_per_node: int | None = None
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.time_format not in ("epoch", "iso8601"):
            raise WorkloadError(f"unknown time_format: {self.time_format!r}")
        if self.duration_unit not in _DURATION_SCALE:
            raise WorkloadError(f"unknown duration_unit: {self.duration_unit!r}")
        if self.shared_mode not in ("none", "flag", "cpu-fraction"):
            raise WorkloadError(f"unknown shared_mode: {self.shared_mode!r}")
        if self.shared_mode != "none" and not self.shared_column:
            raise WorkloadError("shared_mode requires shared_column")
        if self.shared_mode == "cpu-fraction" and not self.cpus_per_node:
            raise WorkloadError("cpu-fraction mode requires cpus_per_node")

    def required_columns(self) -> list[str]:
        cols = [self.record_id, self.submit_time, self.runtime, self.nodes]
        for name in (self.job_key, self.start_time, self.time_limit, self.shared_column):
            if name:
                cols.append(name)
        return cols

    @classmethod
    def from_dict(cls, data: dict) -> "TraceDialect":
        known = {
            "record_id", "submit_time", "runtime", "nodes", "job_key",
            "start_time", "time_limit", "time_format", "duration_unit",
            "shared_mode", "shared_column", "shared_true_values",
            "cpus_per_node", "constants",
        }
        unknown = set(data) - known
        if unknown:
            raise WorkloadError(f"unknown dialect keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "shared_true_values" in kwargs:
            kwargs["shared_true_values"] = tuple(kwargs["shared_true_values"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "TraceDialect":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _parse_timestamp(value: str, fmt: str) -> int:
    if fmt == "epoch":
        return int(value)
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_trace(path: str | Path, dialect: TraceDialect) -> tuple[list[RawTraceRecord], int]:
    """Read a trace CSV. Returns (records, skipped_row_count).

    Rows whose mandatory fields fail to parse, or that violate basic
    record invariants (negative runtime, nodes < 1, submit after start),
    are skipped and counted. Raises WorkloadError when the dialect
    references absent columns or no row parses at all.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    records: list[RawTraceRecord] = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in dialect.required_columns() if c not in header]
        if missing:
            raise WorkloadError(f"dialect references absent columns: {missing}")
        for row in reader:
            rec = _parse_row(row, dialect)
            if rec is None:
                skipped += 1
            else:
                records.append(rec)
    if not records:
        raise WorkloadError(f"no parseable rows in {path}")
    return records, skipped


def _parse_row(row: dict, dialect: TraceDialect) -> RawTraceRecord | None:
    scale = _DURATION_SCALE[dialect.duration_unit]
    try:
        record_id = row[dialect.record_id].strip()
        job_key = row[dialect.job_key].strip() if dialect.job_key else record_id
        submit = _parse_timestamp(row[dialect.submit_time].strip(), dialect.time_format)
        runtime = int(row[dialect.runtime].strip()) * scale
        nodes = int(row[dialect.nodes].strip())
        start = None
        if dialect.start_time:
            raw = row[dialect.start_time].strip()
            if raw:
                start = _parse_timestamp(raw, dialect.time_format)
        limit = None
        if dialect.time_limit:
            raw = row[dialect.time_limit].strip()
            if raw:
                limit = int(raw) * scale
        elif "time_limit" in dialect.constants:
            limit = int(dialect.constants["time_limit"])
        shared = _is_shared(row, dialect)
    except (KeyError, ValueError, TypeError):
        return None
    if not record_id or runtime < 0 or nodes < 1 or submit < 0:
        return None
    if start is not None and submit > start:
        return None
    return RawTraceRecord(
        record_id=record_id,
        job_key=job_key,
        submit_time=submit,
        runtime=runtime,
        nodes_allocated=nodes,
        shared_node_flag=shared,
        start_time=start,
        time_limit=limit,
    )


def _is_shared(row: dict, dialect: TraceDialect) -> bool:
    if dialect.shared_mode == "none":
        return False
    value = row[dialect.shared_column].strip()
    if dialect.shared_mode == "flag":
        return value.lower() in tuple(v.lower() for v in dialect.shared_true_values)
    cpus = int(value)
    return cpus % dialect.cpus_per_node != 0


def merge_split_entries(
    records: list[RawTraceRecord], tolerance_seconds: int = 1
) -> list[RawTraceRecord]:
    """Collapse contiguous same-key segments into single records.

    Two segments of the same job_key merge when the next segment's start
    equals the previous segment's end (start + runtime) within
    ``tolerance_seconds`` (one scheduling tick). A merged record keeps the
    first segment's id and start, the earliest submit, the summed runtime,
    the max node count, and is flagged shared if any segment was. Total
    runtime is conserved exactly. Idempotent.
    """
    ordered = sorted(
        records,
        key=lambda r: (r.job_key, r.submit_time, r.start_time if r.start_time is not None else -1, r.record_id),
    )
    merged: list[RawTraceRecord] = []
    for rec in ordered:
        prev = merged[-1] if merged else None
        if prev is not None and prev.job_key == rec.job_key and _contiguous(prev, rec, tolerance_seconds):
            if prev.nodes_allocated != rec.nodes_allocated:
                log.warning(
                    "merging %s: node counts differ across segments (%d vs %d), keeping max",
                    rec.job_key, prev.nodes_allocated, rec.nodes_allocated,
                )
            limits = [x for x in (prev.time_limit, rec.time_limit) if x is not None]
            merged[-1] = replace(
                prev,
                submit_time=min(prev.submit_time, rec.submit_time),
                runtime=prev.runtime + rec.runtime,
                nodes_allocated=max(prev.nodes_allocated, rec.nodes_allocated),
                shared_node_flag=prev.shared_node_flag or rec.shared_node_flag,
                time_limit=max(limits) if limits else None,
            )
        else:
            merged.append(rec)
    return merged


def _contiguous(prev: RawTraceRecord, nxt: RawTraceRecord, tolerance: int) -> bool:
    if prev.start_time is None or nxt.start_time is None:
        return False
    return abs(nxt.start_time - (prev.start_time + prev.runtime)) <= tolerance


def filter_shared_node_jobs(
    records: list[RawTraceRecord],
) -> tuple[list[RawTraceRecord], int, int]:
    """Drop flagged records. Returns (kept, removed_count, removed_runtime_sum)."""
    kept = [r for r in records if not r.shared_node_flag]
    removed = [r for r in records if r.shared_node_flag]
    return kept, len(removed), sum(r.runtime for r in removed)


def finalize_jobs(
    records: list[RawTraceRecord], limit_fill_factor: float = 1.25
) -> list[RigidJobSpec]:
    """Turn cleaned records into RigidJobSpecs.

    Records without a time limit, or with a limit below their runtime, get
    time_limit = ceil(limit_fill_factor * runtime). Rejects records with
    runtime 0 or nodes 0 (and duplicate ids), listing the offending ids.
    Output is sorted by (submit_time, id).
    """
    if limit_fill_factor <= 1.0:
        raise WorkloadError("limit_fill_factor must be > 1")
    bad = [r.record_id for r in records if r.runtime <= 0 or r.nodes_allocated <= 0]
    if bad:
        raise WorkloadError(f"records with zero runtime or nodes: {bad}")
    seen: set[str] = set()
    dupes = []
    for r in records:
        if r.record_id in seen:
            dupes.append(r.record_id)
        seen.add(r.record_id)
    if dupes:
        raise WorkloadError(f"duplicate record ids after cleaning: {dupes}")
    jobs = []
    for r in records:
        limit = r.time_limit
        if limit is None or limit < r.runtime:
            limit = math.ceil(limit_fill_factor * r.runtime)
        jobs.append(
            RigidJobSpec(
                id=r.record_id,
                submit_time=r.submit_time,
                requested_nodes=r.nodes_allocated,
                runtime=r.runtime,
                time_limit=limit,
            )
        )
    jobs.sort(key=lambda j: (j.submit_time, j.id))
    return jobs


def select_window(jobs: list[RigidJobSpec], start: int, duration: int) -> list[RigidJobSpec]:
    """Keep jobs with start <= submit < start + duration, re-based to 0."""
    if duration <= 0:
        raise WorkloadError("window duration must be > 0")
    selected = [
        replace(j, submit_time=j.submit_time - start)
        for j in jobs
        if start <= j.submit_time < start + duration
    ]
    if not selected:
        log.warning("window [%d, %d) selects no jobs", start, start + duration)
    return selected


def emit_canonical(jobs: list[RigidJobSpec], path: str | Path) -> None:
    """Write the canonical job JSON (sorted by submit then id)."""
    payload = {
        "version": CANONICAL_VERSION,
        "jobs": [
            {
                "id": j.id,
                "submit": j.submit_time,
                "nodes": j.requested_nodes,
                "runtime": j.runtime,
                "time_limit": j.time_limit,
            }
            for j in sorted(jobs, key=lambda j: (j.submit_time, j.id))
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_canonical(path: str | Path) -> list[RigidJobSpec]:
    """Read a canonical job JSON back into RigidJobSpecs."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CANONICAL_VERSION:
        raise WorkloadError(f"unsupported canonical version: {payload.get('version')!r}")
    return [
        RigidJobSpec(
            id=item["id"],
            submit_time=int(item["submit"]),
            requested_nodes=int(item["nodes"]),
            runtime=int(item["runtime"]),
            time_limit=int(item["time_limit"]),
        )
        for item in payload["jobs"]
    ]
