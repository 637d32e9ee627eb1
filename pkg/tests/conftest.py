import warnings

import numpy as np
import pytest

from rarisac.channels import ReferenceStrengthWarning
from rarisac.scenario import make_instance
from rarisac.validate import small_config

# filled by test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = []
ACCEPTANCE_DETAILS = []   # (criterion, text)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_phi(rng, n):
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))


def random_W(rng, n_tx, k, p=1.0):
    W = crandn(rng, n_tx, k)
    return W * np.sqrt(p) / np.linalg.norm(W)


def instance(seed=0, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReferenceStrengthWarning)
        return make_instance(small_config(**kw), seed)


@pytest.fixture(scope="session")
def small_inst():
    return instance(0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
    if ACCEPTANCE_DETAILS:
        terminalreporter.section("acceptance details")
        for n, text in sorted(ACCEPTANCE_DETAILS, key=lambda d: d[0]):
            terminalreporter.write_line(f"[{n}] {text}")
