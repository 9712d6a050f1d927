"""REINFORCE with a per-timestep baseline over Monte Carlo episodes of each jobset.

Random streams are split from the master seed with ``numpy.random.SeedSequence``
spawn keys, so results do not depend on how rollouts are batched or resumed:

* rollout rng for iteration ``i``, jobset ``k``, episode ``e``: key ``(ROLLOUT_KEY, i, k, e)``
* parameter initialization: key ``(INIT_KEY,)``
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import policy as pol
from .baselines import EpisodeSummary, summarize
from .environment import EnvConfig, SchedulingEnv
from .errors import ConfigError
from .workload import JobSet

ROLLOUT_KEY = 1
INIT_KEY = 4
METRICS_HEADER = "iteration,mean_total_reward,mean_slowdown,mean_episode_length,wall_time"


@dataclass(frozen=True)
class TrainConfig:
    num_iterations: int = 100
    jobsets_per_iteration: int = 10
    episodes_per_jobset: int = 20
    discount: float = 1.0
    max_episode_length: int = 1000  # agent decisions
    eval_every: int = 10
    seed: int = 0
    baseline_alignment: str = "timestep"  # or "decision"

    def __post_init__(self):
        for name in ("num_iterations", "jobsets_per_iteration", "episodes_per_jobset",
                     "max_episode_length", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be >= 1")
        if not 0 < self.discount <= 1:
            raise ConfigError("train.discount must be in (0, 1]")
        if self.baseline_alignment not in ("timestep", "decision"):
            raise ConfigError("train.baseline_alignment must be 'timestep' or 'decision'")


@dataclass
class Trajectory:
    observations: np.ndarray  # (n, rows, cols) uint8
    actions: np.ndarray
    rewards: np.ndarray
    jobset_id: int = 0
    clocks: Optional[np.ndarray] = None  # environment timestep at each decision
    returns: Optional[np.ndarray] = None
    summary: Optional[EpisodeSummary] = None

    def __len__(self):
        return len(self.actions)


@dataclass
class IterationReport:
    iteration: int
    mean_total_reward: float
    mean_slowdown: float
    mean_episode_length: float
    wall_time: float

    def csv_row(self) -> str:
        return (f"{self.iteration},{self.mean_total_reward!r},{self.mean_slowdown!r},"
                f"{self.mean_episode_length!r},{self.wall_time:.3f}")


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def batch_probs_fn(params: pol.PolicyParams):
    """Action-probability function for batches of binary observations."""
    if pol.PatternTables.supports(params.config):
        return pol.PatternTables(params).probs
    return lambda images: pol.action_probs(images, params)


def rollout_batch(env_config: EnvConfig, jobsets: Sequence[JobSet],
                  params: Optional[pol.PolicyParams], rngs: Sequence[Optional[np.random.Generator]],
                  max_len: int, greedy: bool = False,
                  jobset_ids: Optional[Sequence[int]] = None) -> list[Trajectory]:
    """Run one episode per jobset in lock step, batching the policy forward pass.

    ``params=None`` is the uniform random policy over all actions.  With
    ``greedy`` the most probable action is taken and rngs may be None.
    """
    n = len(jobsets)
    envs = [SchedulingEnv(env_config) for _ in range(n)]
    current = [env.reset(js) for env, js in zip(envs, jobsets)]
    obs_log = [[] for _ in range(n)]
    act_log = [[] for _ in range(n)]
    rew_log = [[] for _ in range(n)]
    clock_log = [[] for _ in range(n)]
    totals = [0.0] * n
    uniform = np.full(env_config.num_actions, 1.0 / env_config.num_actions)
    probs_fn = None if params is None else batch_probs_fn(params)
    active = [i for i in range(n) if not envs[i].done]
    # an empty jobset still gets one void transition so its trajectory is non-empty
    for i in range(n):
        if envs[i].done:
            obs_log[i].append(current[i])
            act_log[i].append(env_config.void_action)
            rew_log[i].append(0.0)
            clock_log[i].append(0)
    while active:
        if params is None:
            probs = np.broadcast_to(uniform, (len(active), len(uniform)))
        else:
            probs = probs_fn(np.stack([current[i] for i in active]))
        still = []
        for row, i in enumerate(active):
            action = (pol.greedy_action(probs[row]) if greedy
                      else pol.sample_action(probs[row], rngs[i]))
            obs_log[i].append(current[i])
            act_log[i].append(action)
            clock_log[i].append(envs[i].state.clock)
            result = envs[i].step(action)
            rew_log[i].append(result.reward)
            totals[i] += result.reward
            current[i] = result.observation
            if not result.done and len(act_log[i]) < max_len:
                still.append(i)
        active = still
    ids = jobset_ids if jobset_ids is not None else range(n)
    return [Trajectory(np.array(obs_log[i], dtype=np.uint8), np.array(act_log[i], dtype=np.intp),
                       np.array(rew_log[i], dtype=np.float64), ids[i],
                       np.array(clock_log[i], dtype=np.intp),
                       summary=summarize(envs[i], totals[i], len(act_log[i])))
            for i in range(n)]


def rollout(env_config: EnvConfig, jobset: JobSet, params: Optional[pol.PolicyParams],
            rng: np.random.Generator, max_len: int) -> Trajectory:
    return rollout_batch(env_config, [jobset], params, [rng], max_len)[0]


def compute_returns(rewards, discount: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


def compute_baseline(returns: Sequence[np.ndarray]) -> np.ndarray:
    """Per-timestep mean return over the trajectories that reach each timestep."""
    if not returns:
        raise ValueError("need at least one trajectory")
    length = max(len(r) for r in returns)
    sums = np.zeros(length)
    counts = np.zeros(length)
    for r in returns:
        sums[:len(r)] += r
        counts[:len(r)] += 1
    return sums / np.maximum(counts, 1)


def compute_advantages(returns: Sequence[np.ndarray]) -> list[np.ndarray]:
    baseline = compute_baseline(returns)
    return [r - baseline[:len(r)] for r in returns]


def first_per_timestep(values: np.ndarray, clocks: np.ndarray) -> np.ndarray:
    """``values`` at the first decision of each timestep ``0..clocks[-1]``."""
    starts = np.searchsorted(clocks, np.arange(clocks[-1] + 1))
    return values[starts]


def compute_timestep_advantages(trajectories: Sequence["Trajectory"]) -> list[np.ndarray]:
    """Advantages with the baseline indexed by environment timestep.

    The baseline for timestep ``c`` averages, over the trajectories that reach
    ``c``, the return from their first decision at ``c``.  Every decision made
    during timestep ``c`` is measured against that baseline.
    """
    per_step = [first_per_timestep(t.returns, t.clocks) for t in trajectories]
    baseline = compute_baseline(per_step)
    return [t.returns - baseline[t.clocks] for t in trajectories]


def accumulate_gradient(params: pol.PolicyParams, observations: np.ndarray, actions: np.ndarray,
                        advantages: np.ndarray) -> dict:
    """Sum of policy gradients over all steps, computed in memory-bounded chunks."""
    keep = advantages != 0.0
    observations, actions, advantages = observations[keep], actions[keep], advantages[keep]
    if pol.PatternTables.supports(params.config):
        return pol.PatternTables(params).policy_gradient(observations, actions, advantages)
    grad = pol.zero_gradient(params.config)
    chunk = pol.chunk_size(params.config)
    for start in range(0, len(actions), chunk):
        sl = slice(start, start + chunk)
        trace = pol.forward(observations[sl], params)
        for name, g in pol.policy_gradient(trace, actions[sl], advantages[sl], params).items():
            grad[name] += g
    return grad


def train_iteration(params: pol.PolicyParams, jobsets: Sequence[JobSet], env_config: EnvConfig,
                    config: TrainConfig, iteration: int) -> tuple[pol.PolicyParams, IterationReport]:
    start = time.perf_counter()
    episodes = config.episodes_per_jobset
    batch_jobsets, rngs, ids = [], [], []
    for k, js in enumerate(jobsets):
        for e in range(episodes):
            batch_jobsets.append(js)
            rngs.append(rng_for(config.seed, ROLLOUT_KEY, iteration, k, e))
            ids.append(k)
    trajs = rollout_batch(env_config, batch_jobsets, params, rngs, config.max_episode_length,
                          jobset_ids=ids)
    for traj in trajs:
        traj.returns = compute_returns(traj.rewards, config.discount)
    advantages = []
    for k in range(len(jobsets)):
        group = trajs[k * episodes:(k + 1) * episodes]
        if config.baseline_alignment == "timestep":
            advantages.extend(compute_timestep_advantages(group))
        else:
            advantages.extend(compute_advantages([t.returns for t in group]))

    total_steps = sum(len(t) for t in trajs)
    grad = accumulate_gradient(params, np.concatenate([t.observations for t in trajs]),
                               np.concatenate([t.actions for t in trajs]),
                               np.concatenate(advantages))
    for g in grad.values():
        g /= total_steps
    new_params = pol.apply_update(params, grad)

    slowdowns = [s for t in trajs for s in t.summary.slowdowns]
    report = IterationReport(
        iteration=iteration,
        mean_total_reward=float(np.mean([t.returns[0] for t in trajs])),
        mean_slowdown=float(np.mean(slowdowns)) if slowdowns else float("nan"),
        mean_episode_length=float(np.mean([len(t) for t in trajs])),
        wall_time=time.perf_counter() - start,
    )
    return new_params, report


@dataclass
class EvalSummary:
    mean_slowdown: Optional[float]
    std_slowdown: Optional[float]
    mean_reward: float
    jobs_dropped: int
    truncated_jobs: int
    per_jobset: list = field(default_factory=list)


def summarize_episodes(summaries: Sequence[EpisodeSummary]) -> EvalSummary:
    """Average per-jobset mean slowdowns; jobsets with no jobs are skipped."""
    per = [s.mean_slowdown for s in summaries if s.mean_slowdown is not None]
    return EvalSummary(
        mean_slowdown=float(np.mean(per)) if per else None,
        std_slowdown=float(np.std(per)) if per else None,
        mean_reward=float(np.mean([s.total_reward for s in summaries])) if summaries else 0.0,
        jobs_dropped=sum(s.jobs_dropped for s in summaries),
        truncated_jobs=sum(s.truncated_jobs for s in summaries),
        per_jobset=per,
    )


def evaluate(params: Optional[pol.PolicyParams], jobsets: Sequence[JobSet], env_config: EnvConfig,
             max_len: int = 1000, rngs=None) -> EvalSummary:
    """Greedy evaluation; ``params=None`` with ``rngs`` evaluates the uniform random policy."""
    if not jobsets:
        return summarize_episodes([])
    greedy = params is not None
    if rngs is None:
        if not greedy:
            raise ValueError("the uniform random policy needs rngs")
        rngs = [None] * len(jobsets)
    trajs = rollout_batch(env_config, jobsets, params, rngs, max_len, greedy=greedy)
    return summarize_episodes([t.summary for t in trajs])


def train(params: pol.PolicyParams, env_config: EnvConfig, config: TrainConfig,
          jobsets_for: Callable[[int], Sequence[JobSet]], start_iteration: int = 1,
          stop_iteration: Optional[int] = None,
          callback: Optional[Callable[[pol.PolicyParams, IterationReport], None]] = None
          ) -> pol.PolicyParams:
    """Run iterations ``start_iteration .. stop_iteration`` (1-based, inclusive)."""
    stop = config.num_iterations if stop_iteration is None else stop_iteration
    for it in range(start_iteration, stop + 1):
        params, report = train_iteration(params, jobsets_for(it), env_config, config, it)
        if callback is not None:
            callback(params, report)
    return params
