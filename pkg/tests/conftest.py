import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance criteria register one line each here; printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def data_path(env):
    """Path from an environment variable, or skip when unset or missing."""
    p = os.environ.get(env, "")
    if not p or not os.path.exists(p):
        pytest.skip(f"set {env} to run against the real dataset")
    return p


# desk-sized settings that exercise every pipeline in about a second each
SMALL_OVERRIDES = dict(n_entities=500, epochs=5, n_paths=40, updates=30, rounds=5, n_val=200,
                       server_counts=(2, 3), datasets=("cora",), bound_steps=200,
                       layer_counts=(1, 2, 3), snr_db=(0.0, 8.0))
