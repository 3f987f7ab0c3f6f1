import pytest

from agebid import CompetitionModel, ValueCurve


@pytest.fixture(scope="session")
def uniform01():
    return CompetitionModel.uniform01()


@pytest.fixture(scope="session")
def kexp():
    return ValueCurve.exp_saturating()


@pytest.fixture(scope="session")
def khyp():
    return ValueCurve.hyperbolic()


@pytest.fixture(scope="session")
def ktwostep():
    return ValueCurve.two_step()


@pytest.fixture(scope="session")
def staircase_cdf():
    # reserve-free piecewise CDF with two slopes
    return CompetitionModel.piecewise_linear_cdf(
        [(0.0, 0.0), (0.5, 0.25), (1.0, 0.75), (1.5, 1.0)])
