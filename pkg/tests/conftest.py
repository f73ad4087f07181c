import numpy as np
import pytest

from twinmix.model import BvnParams, sample_pairs

_ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    _ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_data(seed, n_m=60, n_d=60, mu_d2=1.0, rho_m=0.8, rho_d=0.4, sigma2=1.0):
    g = np.random.default_rng(seed)
    mz = sample_pairs(g, BvnParams(0.0, 0.0, rho_m, sigma2), n_m)
    dz = sample_pairs(g, BvnParams(0.0, mu_d2, rho_d, sigma2), n_d)
    return mz, dz
