"""Heuristic schedulers (SJF, Packer, random) and a brute-force optimum for tiny instances."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import EnvConfig, SchedulingEnv, earliest_placement, encode_action
from .errors import InstanceTooLargeError
from .workload import JobSet

MAX_BRUTE_FORCE_JOBS = 5


class HeuristicKind(str, enum.Enum):
    SJF = "sjf"
    PACKER = "packer"
    RANDOM = "random"


def feasible_pairs(env: SchedulingEnv) -> list[tuple[int, int, int]]:
    """(slot, machine, offset) for every queued job and machine where it fits."""
    st = env.state
    pairs = []
    for slot, job in enumerate(st.queue):
        if job is None:
            continue
        for machine in range(env.config.num_machines):
            offset = earliest_placement(st.grid, machine, job)
            if offset is not None:
                pairs.append((slot, machine, offset))
    return pairs


def heuristic_action(env: SchedulingEnv, kind, rng: Optional[np.random.Generator] = None) -> int:
    kind = HeuristicKind(kind)
    cfg = env.config
    pairs = feasible_pairs(env)
    if not pairs:
        return cfg.void_action
    queue = env.state.queue
    if kind is HeuristicKind.SJF:
        slot, machine, _ = min(pairs, key=lambda p: (queue[p[0]].duration, p[0], p[2], p[1]))
    elif kind is HeuristicKind.PACKER:
        def score(p):
            free = env.state.grid.free(p[1])
            return int(np.dot(queue[p[0]].demand, free))
        best = max(score(p) for p in pairs)
        slot, machine, _ = min((p for p in pairs if score(p) == best), key=lambda p: (p[0], p[1]))
    else:
        if rng is None:
            raise ValueError("the random heuristic needs an rng")
        slot, machine, _ = pairs[int(rng.integers(len(pairs)))]
    return encode_action(machine, slot, cfg)


@dataclass
class EpisodeSummary:
    mean_slowdown: Optional[float]
    total_reward: float
    slowdowns: list
    num_finished: int
    truncated_jobs: int
    jobs_dropped: int
    decisions: int


def summarize(env: SchedulingEnv, total_reward: float, decisions: int) -> EpisodeSummary:
    values, truncated = env.slowdowns()
    return EpisodeSummary(
        mean_slowdown=float(np.mean(values)) if values else None,
        total_reward=total_reward,
        slowdowns=values,
        num_finished=len(env.state.completed),
        truncated_jobs=truncated,
        jobs_dropped=len(env.state.dropped),
        decisions=decisions,
    )


def run_heuristic_episode(config: EnvConfig, jobset: JobSet, kind, rng=None,
                          max_decisions: Optional[int] = None) -> EpisodeSummary:
    env = SchedulingEnv(config)
    env.reset(jobset)
    total, decisions = 0.0, 0
    while not env.done and (max_decisions is None or decisions < max_decisions):
        result = env.step(heuristic_action(env, kind, rng))
        total += result.reward
        decisions += 1
    return summarize(env, total, decisions)


@dataclass
class OptimalSchedule:
    total_slowdown: float
    # job id -> (machine, start time)
    assignment: dict


def _serial_schedule(jobs, order, machines, capacity):
    """Place jobs in ``order`` at their earliest feasible start on the given machines."""
    usage = {}  # (machine, t) -> units array
    starts = {}
    total = 0.0
    for idx in order:
        job = jobs[idx]
        machine = machines[idx]
        t = job.arrival_time
        while True:
            if all(np.all(usage.get((machine, s), 0) + np.asarray(job.demand) <= capacity)
                   for s in range(t, t + job.duration)):
                break
            t += 1
        for s in range(t, t + job.duration):
            usage[(machine, s)] = usage.get((machine, s), 0) + np.asarray(job.demand)
        starts[job.id] = (machine, t)
        total += (t + job.duration - job.arrival_time) / job.duration
    return total, starts


def brute_force_optimal(jobset: JobSet, config: EnvConfig) -> OptimalSchedule:
    """Minimum total slowdown over all non-preemptive schedules.

    Enumerates every job order and machine assignment and builds the serial
    schedule (each job at its earliest feasible start after arrival).  The
    serial scheme reaches every active schedule, and total slowdown is a
    regular objective, so the minimum is optimal.  Queue length and the
    lookahead horizon are ignored, which makes this a lower bound on
    anything the environment can realize.
    """
    jobs = list(jobset.jobs)
    if len(jobs) > MAX_BRUTE_FORCE_JOBS:
        raise InstanceTooLargeError(
            f"{len(jobs)} jobs; brute force is limited to {MAX_BRUTE_FORCE_JOBS}")
    if not jobs:
        return OptimalSchedule(0.0, {})
    capacity = np.asarray(config.capacity)
    best = None
    n = len(jobs)
    for machines in itertools.product(range(config.num_machines), repeat=n):
        for order in itertools.permutations(range(n)):
            total, starts = _serial_schedule(jobs, order, machines, capacity)
            if best is None or total < best.total_slowdown - 1e-12:
                best = OptimalSchedule(total, starts)
    return best
