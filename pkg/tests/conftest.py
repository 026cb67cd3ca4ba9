import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vrleak.simulate import NoiseModel, sample_population, simulate_session

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def population(n, seed):
    return tuple(sample_population(n, seed=seed))


@functools.lru_cache(maxsize=None)
def session(n, pop_seed, index, noiseless, seed=0, tier="PrivilegedII"):
    p = population(n, pop_seed)[index]
    noise = NoiseModel.noiseless() if noiseless else NoiseModel()
    return p, simulate_session(p, noise=noise, seed=seed, tier=tier)


@pytest.fixture(scope="session")
def clean_session():
    """One noiseless full-script session and its profile."""
    return session(4, 7, 0, True)


@pytest.fixture(scope="session")
def noisy_session():
    return session(4, 7, 1, False)


def static_trace(n=200, rate=90.0, head=(0.0, 1.59, 0.0), left=(-0.3, 1.0, 0.0), right=(0.3, 1.0, 0.0)):
    from vrleak.telemetry import TelemetryTrace

    t = np.arange(n) / rate
    pos = np.tile(np.array([head, left, right], float), (n, 1, 1))
    return TelemetryTrace(t, pos, None, rate)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
