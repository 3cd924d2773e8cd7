import pytest

from twowayfa import lm, runtime
from twowayfa._engine import HAS_NUMBA


@pytest.fixture(scope="session")
def qcfa_default():
    return lm.build_lm_qcfa(0.25)


@pytest.fixture(scope="session")
def qcfa_k2():
    return lm.build_lm_qcfa(k=2)


@pytest.fixture(scope="session")
def pfa_k1():
    return lm.build_lm_pfa(1)


@pytest.fixture(scope="session")
def pfa_k2():
    return lm.build_lm_pfa(2)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels(qcfa_default, pfa_k1):
    # Pay the one-time JIT cost before any timed test runs.
    if HAS_NUMBA:
        runtime.run_trajectory(qcfa_default, "aca", 0, 50)
        runtime.run_trajectory(pfa_k1, "aca", 0, 50)
