"""Exact expected return of the uniform random policy on small MDPs, by enumeration."""

import copy

from drlsched.environment import SchedulingEnv


def _key(env, decisions):
    st = env.state
    return (decisions, st.clock,
            tuple(None if j is None else j.id for j in st.queue),
            tuple(j.id for j in st.backlog),
            tuple(sorted((j.id, j.schedule_time, j.assigned_machine) for j in st.running)),
            len(st.pending_arrivals))


def uniform_expected_return(config, jobset, max_decisions):
    """E[sum of rewards] when every action in [0, m*q] is drawn uniformly."""
    root = SchedulingEnv(config)
    root.reset(jobset)
    memo = {}

    def value(env, decisions):
        if env.done or decisions >= max_decisions:
            return 0.0
        key = _key(env, decisions)
        if key not in memo:
            total = 0.0
            for action in range(config.num_actions):
                child = copy.deepcopy(env)
                result = child.step(action)
                total += result.reward + value(child, decisions + 1)
            memo[key] = total / config.num_actions
        return memo[key]

    return value(root, 0)
