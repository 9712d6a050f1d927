"""Random jobset generation and the line-oriented jobset file format.

Jobs arrive by a Bernoulli process (at most one per timestep).  Each job is
short with probability ``short_fraction``; one resource is picked uniformly
as dominant and draws its demand from ``dominant_demand_range`` while the
others draw from ``other_demand_range``.  Demands are fractions of machine
capacity rounded up to whole resource units.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import JobsetParseError, ParameterError

HEADER_TAG = "jobset"
FORMAT_VERSION = "v1"


@dataclass(frozen=True)
class WorkloadParams:
    arrival_rate: float = 0.7
    short_fraction: float = 0.8
    short_duration_range: tuple[int, int] = (1, 3)
    long_duration_range: tuple[int, int] = (10, 15)
    dominant_demand_range: tuple[float, float] = (0.25, 0.5)
    other_demand_range: tuple[float, float] = (0.05, 0.1)
    num_resources: int = 2
    capacity: tuple[int, ...] = (10, 10)
    episode_arrival_window: int = 50
    seed: int = 0

    def __post_init__(self):
        # allow lists from config parsing
        for name in ("short_duration_range", "long_duration_range", "dominant_demand_range",
                     "other_demand_range", "capacity"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        for name in ("arrival_rate", "short_fraction"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ParameterError(name, f"probability {p} outside [0, 1]")
        for name in ("short_duration_range", "long_duration_range"):
            lo, hi = _pair(self, name)
            if int(lo) != lo or int(hi) != hi:
                raise ParameterError(name, "durations must be integers")
            if lo < 1 or hi < lo:
                raise ParameterError(name, f"need 1 <= min <= max, got {(lo, hi)}")
        for name in ("dominant_demand_range", "other_demand_range"):
            lo, hi = _pair(self, name)
            if lo <= 0 or hi < lo or hi > 1.0:
                raise ParameterError(name, f"need 0 < min <= max <= 1, got {(lo, hi)}")
        if self.num_resources < 1:
            raise ParameterError("num_resources", "must be >= 1")
        if len(self.capacity) != self.num_resources:
            raise ParameterError(
                "capacity", f"expected {self.num_resources} entries, got {len(self.capacity)}")
        if any(c < 1 for c in self.capacity):
            raise ParameterError("capacity", "every capacity must be >= 1")
        if self.episode_arrival_window < 0:
            raise ParameterError("episode_arrival_window", "must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed", "must be a 64-bit unsigned integer")

    @property
    def max_duration(self) -> int:
        return max(self.short_duration_range[1], self.long_duration_range[1])


def _pair(params, name):
    value = getattr(params, name)
    if len(value) != 2:
        raise ParameterError(name, "expected a (min, max) pair")
    return value


@dataclass
class Job:
    id: int
    arrival_time: int
    duration: int
    demand: tuple[int, ...]
    schedule_time: Optional[int] = None
    assigned_machine: Optional[int] = None
    finish_time: Optional[int] = None

    @property
    def finished(self) -> bool:
        return self.finish_time is not None

    def fresh(self) -> "Job":
        """Copy with the scheduling fields cleared."""
        return Job(self.id, self.arrival_time, self.duration, self.demand)


@dataclass(frozen=True)
class JobSet:
    jobs: tuple[Job, ...]
    capacity: tuple[int, ...]
    params: Optional[WorkloadParams] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "capacity", tuple(self.capacity))
        ids = [j.id for j in self.jobs]
        if len(set(ids)) != len(ids):
            raise ParameterError("jobs", "job ids must be unique")
        arrivals = [j.arrival_time for j in self.jobs]
        if arrivals != sorted(arrivals):
            raise ParameterError("jobs", "arrival times must be nondecreasing")

    @property
    def num_resources(self) -> int:
        return len(self.capacity)

    def __len__(self):
        return len(self.jobs)


def _draw_demand(rng, lo, hi, cap):
    units = math.ceil(rng.uniform(lo, hi) * cap)
    return min(max(units, 1), cap)


def generate_jobset(params: WorkloadParams) -> JobSet:
    params.validate()
    rng = np.random.default_rng(params.seed)
    d = params.num_resources
    jobs = []
    for t in range(params.episode_arrival_window):
        if rng.random() >= params.arrival_rate:
            continue
        if rng.random() < params.short_fraction:
            lo, hi = params.short_duration_range
        else:
            lo, hi = params.long_duration_range
        duration = int(rng.integers(lo, hi + 1))
        dominant = int(rng.integers(d))
        demand = []
        for r in range(d):
            lo_f, hi_f = (params.dominant_demand_range if r == dominant
                          else params.other_demand_range)
            demand.append(_draw_demand(rng, lo_f, hi_f, params.capacity[r]))
        jobs.append(Job(len(jobs), t, duration, tuple(demand)))
    return JobSet(tuple(jobs), params.capacity, params)


def save_jobset(jobset: JobSet, path) -> None:
    lines = [f"{HEADER_TAG} {FORMAT_VERSION} d={jobset.num_resources} "
             f"cap={','.join(str(c) for c in jobset.capacity)}"]
    for job in jobset.jobs:
        lines.append(" ".join(str(v) for v in (job.id, job.arrival_time, job.duration, *job.demand)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line):
    parts = line.split()
    if len(parts) != 4 or parts[0] != HEADER_TAG:
        raise JobsetParseError(1, f"expected header 'jobset v1 d=<d> cap=<c1,...>', got {line!r}")
    if parts[1] != FORMAT_VERSION:
        raise JobsetParseError(1, f"unsupported version {parts[1]!r}")
    if not parts[2].startswith("d=") or not parts[3].startswith("cap="):
        raise JobsetParseError(1, "header needs d= and cap= fields")
    try:
        d = int(parts[2][2:])
        cap = tuple(int(c) for c in parts[3][4:].split(","))
    except ValueError as exc:
        raise JobsetParseError(1, f"bad header value: {exc}") from None
    if d < 1 or len(cap) != d or any(c < 1 for c in cap):
        raise JobsetParseError(1, f"inconsistent header d={d} cap={cap}")
    return d, cap


def load_jobset(path) -> JobSet:
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or not raw[0].strip():
        raise JobsetParseError(1, "missing header")
    d, cap = _parse_header(raw[0])
    jobs = []
    for lineno, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3 + d:
            raise JobsetParseError(lineno, f"expected {3 + d} fields, got {len(fields)}")
        try:
            values = [int(f) for f in fields]
        except ValueError:
            raise JobsetParseError(lineno, f"non-integer field in {line!r}") from None
        job_id, arrival, duration, *demand = values
        if arrival < 0 or duration < 1:
            raise JobsetParseError(lineno, "arrival must be >= 0 and duration >= 1")
        if any(u < 1 or u > c for u, c in zip(demand, cap)):
            raise JobsetParseError(lineno, f"demand {demand} outside [1, capacity]")
        if jobs and arrival < jobs[-1].arrival_time:
            raise JobsetParseError(lineno, "arrival times must be nondecreasing")
        if any(j.id == job_id for j in jobs):
            raise JobsetParseError(lineno, f"duplicate job id {job_id}")
        jobs.append(Job(job_id, arrival, duration, tuple(demand)))
    params = WorkloadParams(num_resources=d, capacity=cap)
    return JobSet(tuple(jobs), cap, params)


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit child seed for ``key`` under ``master_seed`` (SeedSequence spawn keys)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_jobsets(params: WorkloadParams, count: int, *key: int) -> list[JobSet]:
    return [generate_jobset(dataclasses.replace(params, seed=derive_seed(params.seed, *key, i)))
            for i in range(count)]


def write_jobsets(params: WorkloadParams, count: int, out_dir) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, js in enumerate(generate_jobsets(params, count)):
        path = os.path.join(out_dir, f"jobset_{i:04d}.txt")
        save_jobset(js, path)
        paths.append(path)
    return paths

