import numpy as np
import pytest

from rsma_hfpi.channel_model import sample_iid_rayleigh
from rsma_hfpi.fp_transform import tight_aux
from rsma_hfpi.solvers import initialize_beamformers


def instance(seed, L=4, K=4, P=100.0, weights=1.0):
    return sample_iid_rayleigh(L, K, 1.0, weights, P, seed)


def mrt_aux(ch):
    return tight_aux(initialize_beamformers(ch), ch)


def random_W(rng, L, K, P=1.0):
    W = rng.standard_normal((L, K + 1)) + 1j * rng.standard_normal((L, K + 1))
    return W * np.sqrt(P / np.vdot(W, W).real)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one verdict line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
