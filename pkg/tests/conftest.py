import pytest

from wpt_aoi.model import SystemParams, derive

# reference parameter set: theta = 1.2, m = 6
SEC5 = dict(P_t=0.01, W=1e6, N0=4e-7, lam=3.0, T_B=1e-3, eta=0.5)


def sec5_params(ell: float = 10.0, p: float = 0.01) -> SystemParams:
    return SystemParams(ell=ell, p=p, **SEC5)


@pytest.fixture
def params_ell10():
    return sec5_params()


@pytest.fixture
def derived_ell10(params_ell10):
    return derive(params_ell10)
