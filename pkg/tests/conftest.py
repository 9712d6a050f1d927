import numpy as np
import pytest

from drlsched.environment import EnvConfig, RewardWeights
from drlsched.workload import Job, JobSet


def make_jobset(specs, capacity=(10, 10)):
    """specs: iterable of (arrival, duration, demand tuple)."""
    jobs = [Job(i, a, t, tuple(d)) for i, (a, t, d) in enumerate(specs)]
    return JobSet(tuple(jobs), capacity)


def brute_force_offset(used, capacity, demand, duration):
    """Scan every start row of a (horizon, d) usage array."""
    horizon = used.shape[0]
    for s in range(horizon - duration + 1):
        if all(used[r, k] + demand[k] <= capacity[k]
               for r in range(s, s + duration) for k in range(len(capacity))):
            return s
    return None


@pytest.fixture
def single_cfg():
    return EnvConfig()


@pytest.fixture
def two_cfg():
    return EnvConfig(num_machines=2)


@pytest.fixture
def unit_weights_two():
    return EnvConfig(num_machines=2, reward_weights=RewardWeights((1.0, 1.0), 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
