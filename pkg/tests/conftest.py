import numpy as np
import pytest

from robust_mcbf.model import ChannelSet, ErrorEllipsoid, SystemConfig


def random_instance(seed, nc=2, K=2, nt=3, eps=0.1, gamma=1.0, sigma2=1.0, cap=None):
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((nc, nc, K, nt)) + 1j * rng.standard_normal((nc, nc, K, nt))) / np.sqrt(2)
    channels = ChannelSet(h, ErrorEllipsoid.sphere(eps, nt))
    cfg = SystemConfig.uniform(nc, K, nt, gamma, sigma2, cap)
    return channels, cfg


def single_user(eps=0.1, gamma=1.0, sigma2=1.0, nt=3):
    h = np.zeros((1, 1, 1, nt), dtype=complex)
    h[0, 0, 0, 0] = 1.0
    return ChannelSet(h, ErrorEllipsoid.sphere(eps, nt)), SystemConfig.uniform(1, 1, nt, gamma, sigma2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
