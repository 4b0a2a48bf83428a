import pytest

from hawkes_meanfield.model import Kernel, RateFn
from hawkes_meanfield.meanfield import solve_mean


@pytest.fixture(scope="session")
def exp_kernel():
    return Kernel.exponential(1.0, 2.0)


@pytest.fixture(scope="session")
def affine_rate():
    return RateFn.affine(1.0, 1.0)


@pytest.fixture(scope="session")
def zero_kernel():
    return Kernel.zero()


@pytest.fixture(scope="session")
def const2_rate():
    return RateFn.affine(2.0, 0.0)


@pytest.fixture(scope="session")
def explin_mean(exp_kernel, affine_rate):
    # the exp-linear workhorse model: h(t) = e^{-2t}, phi(x) = 1 + x
    return solve_mean(exp_kernel, affine_rate, 1.0, 1e-3)


@pytest.fixture(scope="session")
def homog_mean(zero_kernel, const2_rate):
    # homogeneous Poisson benchmark: h = 0, phi = 2
    return solve_mean(zero_kernel, const2_rate, 1.0, 1e-3)
