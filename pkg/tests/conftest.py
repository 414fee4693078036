import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from bellman_refactor.models.finite import (FiniteMdp, build_finite, expected_value_factorization,
                                            identity_factorization, qfactor_factorization,
                                            random_mdp)

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FACTORIZATIONS = {
    "expected_value": expected_value_factorization,
    "q_factor": qfactor_factorization,
    "identity": identity_factorization,
}


def small_mdp(seed, n_states=None, n_actions=None, discount=None):
    rng = np.random.default_rng(seed)
    n = n_states or int(rng.integers(1, 7))
    m = n_actions or int(rng.integers(1, 5))
    return build_finite(random_mdp(rng, n, m, discount=discount))


@pytest.fixture
def two_state():
    """2 states, 2 actions, every action feasible."""
    r = np.array([[1.0, 0.0], [0.5, 2.0]])
    p = np.array([[[0.9, 0.1], [0.2, 0.8]],
                  [[0.5, 0.5], [0.0, 1.0]]])
    return build_finite(FiniteMdp(r, p, 0.9))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
