"""Discrete-time multi-machine, multi-resource scheduling environment.

Action ``i * q + j`` places the job in queue slot ``j`` on machine ``i`` at
the earliest offset (within the lookahead horizon) where it fits; action
``m * q`` is void.  A void action or an invalid one (empty slot, or no
feasible placement) advances the clock by one step.  Only clock advances
yield a nonzero reward: minus the weighted sum of ``1 / T`` over every job
in the system during the elapsed step, so with unit weights the rewards of
an episode add up to minus the total job slowdown.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ActionError, ConfigError, StateError
from .workload import Job, JobSet


@dataclass(frozen=True)
class RewardWeights:
    alpha: Optional[tuple[float, ...]] = None  # per machine; None means all ones
    beta: float = 1.0
    gamma_weight: float = 1.0

    def __post_init__(self):
        if self.alpha is not None:
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
            if any(a < 0 for a in self.alpha):
                raise ConfigError("reward alpha weights must be >= 0")
        if self.beta < 0 or self.gamma_weight < 0:
            raise ConfigError("reward weights must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    num_machines: int = 1
    num_resources: int = 2
    capacity: tuple[int, ...] = (10, 10)
    lookahead_horizon: int = 20
    queue_length: int = 5
    backlog_capacity: int = 80
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    max_episode_length: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "capacity", tuple(int(c) for c in self.capacity))
        if self.num_machines < 1 or self.num_resources < 1 or self.queue_length < 1:
            raise ConfigError("num_machines, num_resources and queue_length must be >= 1")
        if len(self.capacity) != self.num_resources:
            raise ConfigError(f"capacity has {len(self.capacity)} entries, "
                              f"num_resources is {self.num_resources}")
        if any(c < 1 for c in self.capacity):
            raise ConfigError("capacities must be >= 1")
        if self.lookahead_horizon < 1:
            raise ConfigError("lookahead_horizon must be >= 1")
        if self.backlog_capacity < 0:
            raise ConfigError("backlog_capacity must be >= 0")
        if self.max_episode_length < 1:
            raise ConfigError("max_episode_length must be >= 1")
        alpha = self.reward_weights.alpha
        if alpha is None:
            alpha = (1.0,) * self.num_machines
            object.__setattr__(self, "reward_weights", RewardWeights(
                alpha, self.reward_weights.beta, self.reward_weights.gamma_weight))
        elif len(alpha) != self.num_machines:
            raise ConfigError(f"reward alpha has {len(alpha)} weights for "
                              f"{self.num_machines} machines")

    @property
    def num_actions(self) -> int:
        return self.num_machines * self.queue_length + 1

    @property
    def void_action(self) -> int:
        return self.num_machines * self.queue_length

    @property
    def backlog_width(self) -> int:
        return math.ceil(self.backlog_capacity / self.lookahead_horizon)

    @property
    def image_shape(self) -> tuple[int, int]:
        units = sum(self.capacity)
        width = (self.num_machines + self.queue_length) * units + self.backlog_width
        return self.lookahead_horizon, width


class ClusterGrid:
    """Allocated units per (machine, row, resource); row 0 is the current step.

    The binary occupancy image of a (machine, resource) pair has the
    allocated units of each row packed to the left.
    """

    def __init__(self, num_machines, horizon, capacity):
        self.capacity = np.asarray(capacity, dtype=np.int64)
        self.used = np.zeros((num_machines, horizon, len(capacity)), dtype=np.int64)

    @property
    def horizon(self) -> int:
        return self.used.shape[1]

    def occupancy(self, machine: int, resource: int) -> np.ndarray:
        cols = np.arange(self.capacity[resource])
        return (cols[None, :] < self.used[machine, :, resource, None]).astype(np.uint8)

    def free(self, machine: int, row: int = 0) -> np.ndarray:
        return self.capacity - self.used[machine, row]

    def place(self, machine: int, offset: int, job: Job) -> None:
        rows = self.used[machine, offset:offset + job.duration]
        rows += np.asarray(job.demand, dtype=np.int64)
        if np.any(rows > self.capacity):
            raise StateError(f"placing job {job.id} exceeds capacity on machine {machine}")

    def shift(self) -> None:
        self.used[:, :-1] = self.used[:, 1:]
        self.used[:, -1] = 0

    def copy(self) -> "ClusterGrid":
        grid = ClusterGrid.__new__(ClusterGrid)
        grid.capacity = self.capacity
        grid.used = self.used.copy()
        return grid


def earliest_placement(grid: ClusterGrid, machine: int, job: Job) -> Optional[int]:
    """Smallest start offset where ``job`` fits for its whole duration, or None."""
    duration = job.duration
    horizon = grid.horizon
    if duration > horizon:
        return None
    fits = np.all(grid.used[machine] + np.asarray(job.demand) <= grid.capacity, axis=1)
    if duration == 1:
        hits = np.flatnonzero(fits)
    else:
        blocked = np.concatenate(([0], np.cumsum(~fits)))
        hits = np.flatnonzero(blocked[duration:] == blocked[:-duration])
    return int(hits[0]) if hits.size else None


class Placement(NamedTuple):
    machine: int
    slot: int


def decode_action(index: int, config: EnvConfig) -> Optional[Placement]:
    """Map an action index to (machine, slot); the void action maps to None."""
    if not 0 <= index <= config.void_action:
        raise ActionError(f"action {index} outside [0, {config.void_action}]")
    if index == config.void_action:
        return None
    machine, slot = divmod(int(index), config.queue_length)
    return Placement(machine, slot)


def encode_action(machine: int, slot: int, config: EnvConfig) -> int:
    return machine * config.queue_length + slot


@dataclass
class EnvState:
    config: EnvConfig
    grid: ClusterGrid
    queue: list[Optional[Job]]
    backlog: deque = field(default_factory=deque)
    running: list[Job] = field(default_factory=list)
    clock: int = 0
    pending_arrivals: deque = field(default_factory=deque)
    completed: list[Job] = field(default_factory=list)
    dropped: list[Job] = field(default_factory=list)

    def jobs_in_system(self) -> int:
        return (sum(j is not None for j in self.queue) + len(self.backlog)
                + len(self.running))

    @property
    def all_finished(self) -> bool:
        return not self.pending_arrivals and self.jobs_in_system() == 0


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    time_advanced: bool
    done: bool


def compute_reward(state: EnvState, weights: RewardWeights) -> float:
    """Minus the weighted sum of reciprocal durations of every job in the system."""
    alpha = weights.alpha or (1.0,) * state.config.num_machines
    machine_terms = [0.0] * len(alpha)
    for job in state.running:
        machine_terms[job.assigned_machine] += 1.0 / job.duration
    total = sum(a * s for a, s in zip(alpha, machine_terms))
    total += weights.beta * sum(1.0 / j.duration for j in state.queue if j is not None)
    total += weights.gamma_weight * sum(1.0 / j.duration for j in state.backlog)
    return -total if total else 0.0


class _ImageLayout:
    """Column bookkeeping shared by every observation of one config."""

    def __init__(self, config: EnvConfig):
        caps = config.capacity
        panel, offset = [], []
        n_panels = (config.num_machines + config.queue_length) * config.num_resources
        for p in range(n_panels):
            cap = caps[p % config.num_resources]
            panel.extend([p] * cap)
            offset.extend(range(cap))
        self.col_panel = np.array(panel, dtype=np.intp)
        self.col_offset = np.array(offset, dtype=np.int64)
        self.n_panels = n_panels
        self.panel_cols = len(panel)


_LAYOUTS: dict[EnvConfig, _ImageLayout] = {}


def _layout(config: EnvConfig) -> _ImageLayout:
    layout = _LAYOUTS.get(config)
    if layout is None:
        layout = _LAYOUTS[config] = _ImageLayout(config)
    return layout


def encode_observation(state: EnvState, config: Optional[EnvConfig] = None) -> np.ndarray:
    """Binary image: machine panels, then queue-slot panels, then the backlog panel."""
    config = config or state.config
    layout = _layout(config)
    horizon, width = config.image_shape
    m, d = config.num_machines, config.num_resources
    counts = np.zeros((horizon, layout.n_panels), dtype=np.int64)
    counts[:, :m * d] = state.grid.used.transpose(1, 0, 2).reshape(horizon, m * d)
    for slot, job in enumerate(state.queue):
        if job is not None:
            base = (m + slot) * d
            counts[:job.duration, base:base + d] = job.demand
    image = np.zeros((horizon, width), dtype=np.uint8)
    image[:, :layout.panel_cols] = layout.col_offset[None, :] < counts[:, layout.col_panel]
    n_backlog = len(state.backlog)
    if n_backlog:
        cells = np.zeros(config.backlog_width * horizon, dtype=np.uint8)
        cells[:n_backlog] = 1
        image[:, layout.panel_cols:] = cells.reshape(config.backlog_width, horizon).T
    return image


def slowdown(job: Job) -> float:
    if job.finish_time is None:
        raise StateError(f"job {job.id} has not finished")
    return (job.finish_time - job.arrival_time) / job.duration


class SchedulingEnv:
    """Gym-style wrapper owning one :class:`EnvState`."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.state: Optional[EnvState] = None
        self.done = False

    def reset(self, jobset: JobSet) -> np.ndarray:
        cfg = self.config
        if jobset.num_resources != cfg.num_resources:
            raise ConfigError(f"jobset has {jobset.num_resources} resources, "
                              f"environment has {cfg.num_resources}")
        for job in jobset.jobs:
            if any(u > c for u, c in zip(job.demand, cfg.capacity)):
                raise ConfigError(f"job {job.id} demand {job.demand} exceeds "
                                  f"capacity {cfg.capacity}")
            if job.duration > cfg.lookahead_horizon:
                raise ConfigError(f"job {job.id} duration {job.duration} exceeds "
                                  f"lookahead horizon {cfg.lookahead_horizon}")
        self.state = EnvState(
            config=cfg,
            grid=ClusterGrid(cfg.num_machines, cfg.lookahead_horizon, cfg.capacity),
            queue=[None] * cfg.queue_length,
            pending_arrivals=deque(job.fresh() for job in jobset.jobs),
        )
        self._admit_arrivals()
        self.done = self.state.all_finished
        return self.observe()

    def observe(self) -> np.ndarray:
        return encode_observation(self.state, self.config)

    def _free_slot(self) -> Optional[int]:
        for slot, job in enumerate(self.state.queue):
            if job is None:
                return slot
        return None

    def _admit_arrivals(self) -> None:
        st = self.state
        while st.pending_arrivals and st.pending_arrivals[0].arrival_time <= st.clock:
            job = st.pending_arrivals.popleft()
            slot = self._free_slot()
            if slot is not None:
                st.queue[slot] = job
            elif len(st.backlog) < self.config.backlog_capacity:
                st.backlog.append(job)
            else:
                st.dropped.append(job)

    def _promote_backlog(self) -> None:
        st = self.state
        while st.backlog:
            slot = self._free_slot()
            if slot is None:
                return
            st.queue[slot] = st.backlog.popleft()

    def advance_time(self) -> StepResult:
        if self.done:
            raise StateError("episode is over; call reset()")
        st = self.state
        # charge the step that is elapsing, before anything leaves the system
        reward = compute_reward(st, self.config.reward_weights)
        st.clock += 1
        st.grid.shift()
        still_running = []
        for job in st.running:
            if job.schedule_time + job.duration <= st.clock:
                job.finish_time = job.schedule_time + job.duration
                st.completed.append(job)
            else:
                still_running.append(job)
        st.running = still_running
        self._promote_backlog()
        self._admit_arrivals()
        self.done = st.all_finished or st.clock >= self.config.max_episode_length
        return StepResult(self.observe(), reward, True, self.done)

    def step(self, action: int) -> StepResult:
        target = decode_action(action, self.config)
        if self.done:
            raise StateError("episode is over; call reset()")
        if target is None:
            return self.advance_time()
        st = self.state
        job = st.queue[target.slot]
        if job is None:
            return self.advance_time()
        offset = earliest_placement(st.grid, target.machine, job)
        if offset is None:
            return self.advance_time()
        st.queue[target.slot] = None
        job.schedule_time = st.clock + offset
        job.assigned_machine = target.machine
        st.grid.place(target.machine, offset, job)
        st.running.append(job)
        return StepResult(self.observe(), 0.0, False, False)

    def is_valid(self, action: int) -> bool:
        """True when ``action`` would place a job (void is not a placement)."""
        target = decode_action(action, self.config)
        if target is None:
            return False
        job = self.state.queue[target.slot]
        return job is not None and earliest_placement(self.state.grid, target.machine, job) is not None

    def slowdowns(self) -> tuple[list[float], int]:
        """Slowdown of every arrived job, plus how many were truncated.

        Jobs still waiting at truncation are charged as if they finished now
        (never less than their own duration); allocated jobs use their
        already-determined finish time.  Dropped jobs are excluded.
        """
        st = self.state
        values = [slowdown(j) for j in st.completed]
        truncated = 0
        for job in st.running:
            values.append((job.schedule_time + job.duration - job.arrival_time) / job.duration)
            truncated += 1
        waiting = [j for j in st.queue if j is not None] + list(st.backlog)
        for job in waiting:
            values.append(max(st.clock - job.arrival_time, job.duration) / job.duration)
            truncated += 1
        return values, truncated


def capacity_ok(state: EnvState) -> bool:
    return bool(np.all(state.grid.used <= state.grid.capacity) and np.all(state.grid.used >= 0))


def format_trace(records: Sequence[tuple[int, int, float, bool]]) -> str:
    """Episode trace text, one ``t action reward done`` line per transition."""
    return "".join(f"{t} {a} {r!r} {int(d)}\n" for t, a, r, d in records)
