import numpy as np
import pytest

from heston_laq.model import DriftParams, FixedCoeffs

# criterion number -> (passed, detail); filled by the acceptance module
ACCEPTANCE = {}


@pytest.fixture
def unit_fixed():
    return FixedCoeffs()


@pytest.fixture
def corr_fixed():
    return FixedCoeffs(sigma1=0.8, sigma2=1.3, rho=-0.4, y0=0.7, x0=0.2)


@pytest.fixture
def sub_theta():
    return DriftParams(1.0, 0.0, 1.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
