import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _normalise(x):
    x = np.asarray(x, dtype=float) + 1e-3
    return x / x.sum(axis=-1, keepdims=True)


@st.composite
def distributions(draw, d=None, min_d=2, max_d=6):
    d = d or draw(st.integers(min_d, max_d))
    raw = draw(arrays(np.float64, d, elements=st.floats(0, 1, allow_nan=False)))
    return _normalise(raw)


@st.composite
def transition_matrices(draw, d):
    raw = draw(arrays(np.float64, (d, d), elements=st.floats(0, 1, allow_nan=False)))
    return _normalise(raw)


@st.composite
def state_action(draw, min_d=2, max_d=6):
    d = draw(st.integers(min_d, max_d))
    return draw(distributions(d=d)), draw(transition_matrices(d))


# ---- shared end-to-end runs on the d=15 synthetic dataset (expensive; computed once)

GCL_SEEDS = (0, 1, 2, 3, 4)
GCL_OUTER_ITERS = 5


@pytest.fixture(scope="session")
def synthetic_days():
    from mfgpop.datagen import generate
    return generate(d=15, n_states=16, m_train=21, m_test=6, theta_star=8.64, c=1e4, seed=0)


@pytest.fixture(scope="session")
def gcl_runs(synthetic_days):
    """``{seed: (W, policy, diagnostics, seconds)}`` for the default configuration."""
    import time

    from mfgpop.irl import GCLConfig, gcl_train
    train, _ = synthetic_days
    runs = {}
    for seed in GCL_SEEDS:
        t0 = time.perf_counter()
        W, policy, diag = gcl_train(train, GCLConfig(outer_iters=GCL_OUTER_ITERS, seed=seed))
        runs[seed] = (W, policy, diag, time.perf_counter() - t0)
    return runs


# ---- acceptance summary: one line per criterion, shown at the end of the run

ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(number, title, passed, detail):
        line = f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} ({detail})"
        print(line)
        ACCEPTANCE.append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
