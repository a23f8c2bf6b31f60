import numpy as np
import pytest

from sdecert.models import SdeModel


def _zero(x):
    return np.zeros_like(x)


def _neg(x):
    return -x


def _ident(x):
    # sigma(x) = diag(x)
    return x[..., :, None] * np.eye(x.shape[-1])


def _ones(x):
    return np.ones_like(x)


def free_model(dim=1, sigma=1.0):
    return SdeModel("free", dim, dim, _zero, sigma=sigma * np.eye(dim))


def ou_model(dim=1, sigma=1.0):
    return SdeModel("ou", dim, dim, _neg, sigma=sigma * np.eye(dim))


def geometric_model():
    """dX = X dW: diagonal state-dependent noise with d sigma / dx = 1."""
    return SdeModel("gbm", 1, 1, _zero, diffusion_fn=_ident, diffusion_diag_grad=_ones)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


# acceptance criteria append "CRITERION n: PASS|FAIL ..." lines here
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
