import numpy as np
import pytest

from gfk.coefficients import CoefficientSet, Driver
from gfk.weights import WeightedSpace

# lines printed at the end of the session by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def space():
    return WeightedSpace(d=1, q=2.0)


def constant_coeffs(b=0.0, s=1.0, d=1):
    """Constant drift b and diffusion s * I."""
    eye = np.eye(d)

    def drift(x):
        return np.full_like(x, b)

    def sigma(x):
        return np.broadcast_to(s * eye, (x.shape[0], d, d))

    def a_t(x):
        return np.zeros_like(x)

    return CoefficientSet(d, drift, sigma, max(s * s, 1e-300), a_t, f"const-{b}-{s}")


def zero_f(s, x, y, z):
    return np.zeros_like(y)


def linear_h(x):
    return x[:, 0].copy()


def ones_h(x):
    return np.ones(x.shape[0])


def martingale_driver():
    """f = 0, h(x) = x: u(t, x) = x and sigma^* du/dx = sigma."""
    return Driver(zero_f, linear_h, name="martingale")


def decay_driver(h=ones_h):
    """f(y) = -y: with h = 1, u(t, x) = exp(-(T - t))."""
    return Driver(lambda s, x, y, z: -y, h, p=1, C=1.0, mu=0.0, name="decay")
