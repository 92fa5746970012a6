import pytest

from inspectpbe import GameParams, Mm1CostParams, TrafficEnvironment


@pytest.fixture
def etc_env():
    return TrafficEnvironment(theta=0.3, lambda_total=2400.0)


@pytest.fixture
def etc_model():
    return Mm1CostParams(mu_H=1700.0, mu_L=1700.0, vot=50.0)


@pytest.fixture
def etc_params():
    return GameParams(p_t_h=0.0, p_t_l=0.5, p_d=5.0, F_h=0.0, F_l=100.0)


def hand_dc(theta, lam, mu, vot, s):
    """Cost gap c_L - c_H written out from the M/M/1 formulas."""
    dem_h = theta * lam + (1 - theta) * lam * s
    dem_l = (1 - theta) * lam * (1 - s)
    return vot / (mu - dem_l) - vot / (mu - dem_h)
