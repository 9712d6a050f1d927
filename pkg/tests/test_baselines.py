import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_jobset
from drlsched.baselines import (HeuristicKind, brute_force_optimal, feasible_pairs,
                                heuristic_action, run_heuristic_episode)
from drlsched.environment import EnvConfig, SchedulingEnv, decode_action
from drlsched.errors import InstanceTooLargeError
from drlsched.workload import WorkloadParams, generate_jobset

KINDS = list(HeuristicKind)


def _env(cfg, specs, capacity=(10, 10)):
    env = SchedulingEnv(cfg)
    env.reset(make_jobset(specs, capacity))
    return env


def test_sjf_picks_shortest(single_cfg):
    env = _env(single_cfg, [(0, 5, (1, 1)), (0, 2, (1, 1)), (0, 9, (1, 1))])
    assert heuristic_action(env, "sjf") == 1


def test_sjf_prefers_earliest_machine(two_cfg):
    env = _env(two_cfg, [(0, 2, (6, 1))])
    env.state.grid.used[0, 0:2, 0] = 5
    assert decode_action(heuristic_action(env, "sjf"), two_cfg).machine == 1


@pytest.mark.parametrize("kind", KINDS)
def test_single_feasible_pair(single_cfg, kind, rng):
    env = _env(single_cfg, [(0, 3, (2, 1))])
    assert heuristic_action(env, kind, rng) == 0


@pytest.mark.parametrize("kind", KINDS)
def test_void_when_nothing_fits(kind, rng):
    cfg = EnvConfig(lookahead_horizon=4)
    env = _env(cfg, [(0, 4, (10, 1)), (0, 4, (10, 1))])
    env.step(0)
    assert heuristic_action(env, kind, rng) == cfg.void_action


def test_packer_inner_product(single_cfg):
    env = _env(single_cfg, [(0, 1, (4, 1)), (0, 1, (2, 2))])
    env.state.grid.used[0, 0] = (2, 8)  # free capacity (8, 2)
    assert np.dot((4, 1), (8, 2)) == 34 and np.dot((2, 2), (8, 2)) == 20
    assert heuristic_action(env, "packer") == 0


def test_packer_differs_from_sjf(single_cfg):
    env = _env(single_cfg, [(0, 1, (1, 1)), (0, 3, (5, 1))])
    assert heuristic_action(env, "sjf") == 0
    assert heuristic_action(env, "packer") == 1


def test_empty_jobset_episode(single_cfg, rng):
    for kind in KINDS:
        s = run_heuristic_episode(single_cfg, make_jobset([]), kind, rng)
        assert s.num_finished == 0 and s.total_reward == 0.0 and s.mean_slowdown is None


def test_single_job_sjf_slowdown_one(two_cfg):
    s = run_heuristic_episode(two_cfg, make_jobset([(2, 7, (3, 1))]), "sjf")
    assert s.mean_slowdown == 1.0 and s.total_reward == pytest.approx(-1.0)


def test_sjf_beats_random_on_average(single_cfg):
    js = generate_jobset(WorkloadParams(seed=21))
    sjf = run_heuristic_episode(single_cfg, js, "sjf").mean_slowdown
    rand = np.mean([run_heuristic_episode(single_cfg, js, "random",
                                          np.random.default_rng(s)).mean_slowdown
                    for s in range(100)])
    assert sjf <= rand


@pytest.mark.parametrize("kind", KINDS)
def test_heuristic_actions_are_valid(two_cfg, kind):
    js = generate_jobset(WorkloadParams(seed=5, arrival_rate=0.9))
    env = SchedulingEnv(two_cfg)
    env.reset(js)
    rng = np.random.default_rng(0)
    while not env.done:
        action = heuristic_action(env, kind, rng)
        if action != two_cfg.void_action:
            assert env.is_valid(action)
        else:
            assert not feasible_pairs(env)
        env.step(action)


@pytest.mark.parametrize("kind", ["sjf", "packer"])
def test_heuristics_deterministic(two_cfg, kind):
    js = generate_jobset(WorkloadParams(seed=6))
    a = run_heuristic_episode(two_cfg, js, kind)
    b = run_heuristic_episode(two_cfg, js, kind)
    assert a == b


# -- brute force -----------------------------------------------------------------------

def exhaustive_start_times(jobs, num_machines, capacity):
    """Independent oracle: try every start time in [arrival, arrival + total work]."""
    horizon = sum(j.duration for j in jobs)
    best = np.inf
    ranges = [range(j.arrival_time, j.arrival_time + horizon + 1) for j in jobs]
    for machines in itertools.product(range(num_machines), repeat=len(jobs)):
        for starts in itertools.product(*ranges):
            usage = {}
            ok = True
            for j, m, s in zip(jobs, machines, starts):
                for t in range(s, s + j.duration):
                    u = usage.setdefault((m, t), [0] * len(capacity))
                    for r, d in enumerate(j.demand):
                        u[r] += d
                        ok &= u[r] <= capacity[r]
            if ok:
                best = min(best, sum((s + j.duration - j.arrival_time) / j.duration
                                     for j, s in zip(jobs, starts)))
    return best


def test_brute_force_single_job(single_cfg):
    res = brute_force_optimal(make_jobset([(3, 4, (2, 2))]), single_cfg)
    assert res.total_slowdown == 1.0 and res.assignment == {0: (0, 3)}


def test_brute_force_two_full_jobs(single_cfg):
    t = 4
    res = brute_force_optimal(make_jobset([(0, t, (10, 10)), (0, t, (10, 10))]), single_cfg)
    # serial orders: 1 + (T + T) / T either way
    assert res.total_slowdown == 1 + (t + t) / t == 3.0


def test_brute_force_size_limit(single_cfg):
    with pytest.raises(InstanceTooLargeError):
        brute_force_optimal(make_jobset([(0, 1, (1, 1))] * 6), single_cfg)


@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_brute_force_matches_start_time_enumeration(data):
    n = data.draw(st.integers(1, 3))
    m = data.draw(st.integers(1, 2))
    cap = (4, 4)
    specs = sorted([(data.draw(st.integers(0, 2)), data.draw(st.integers(1, 3)),
                     (data.draw(st.integers(1, 4)), data.draw(st.integers(1, 4))))
                    for _ in range(n)])
    js = make_jobset(specs, cap)
    cfg = EnvConfig(num_machines=m, capacity=cap)
    assert brute_force_optimal(js, cfg).total_slowdown == pytest.approx(
        exhaustive_start_times(list(js.jobs), m, cap), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), m=st.integers(1, 2))
def test_optimum_dominates_heuristics(seed, m):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    specs = sorted((int(rng.integers(0, 4)), int(rng.integers(1, 6)),
                    (int(rng.integers(1, 11)), int(rng.integers(1, 11)))) for _ in range(n))
    js = make_jobset(specs)
    cfg = EnvConfig(num_machines=m)
    opt = brute_force_optimal(js, cfg).total_slowdown
    for kind in KINDS:
        s = run_heuristic_episode(cfg, js, kind, rng)
        assert opt <= sum(s.slowdowns) + 1e-12
