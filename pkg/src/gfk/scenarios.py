"""Named (coefficients, driver) pairs, with closed-form solutions where known."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .coefficients import CoefficientSet, Driver

__all__ = ["Scenario", "SCENARIOS", "get_scenario", "list_scenarios"]


@dataclass(frozen=True)
class Scenario:
    name: str
    coeffs: CoefficientSet
    driver: Driver
    description: str
    # exact(t, x, T) -> u(t, x); exact_z(t, x, T) -> (sigma^* grad u)(t, x), shape (M, d)
    exact: Optional[Callable] = None
    exact_z: Optional[Callable] = None
    # hypotheses the scenario is known to break, e.g. ("H.3",)
    violates: tuple = ()

    @property
    def assumptions_violated(self) -> bool:
        return bool(self.violates)


def _identity_sigma(d):
    eye = np.eye(d)

    def sigma(x):
        return np.broadcast_to(eye, (x.shape[0], d, d))

    return sigma


def _zero_drift(x):
    return np.zeros_like(x)


def _zero_a_tilde(x):
    return np.zeros_like(x)


def _gaussian(x):
    return np.exp(-0.5 * np.sum(x * x, axis=-1))


def _ones(x):
    return np.ones(x.shape[0])


def _ones_f0(s, x):
    return np.ones(np.shape(x)[0])


def _brownian(d, name):
    return CoefficientSet(d, _zero_drift, _identity_sigma(d), 1.0, _zero_a_tilde, name)


def heat(d: int = 1) -> Scenario:
    def f(s, x, y, z):
        return np.zeros_like(y)

    def exact(t, x, T):
        v = 1.0 + (T - t)
        return v ** (-d / 2) * np.exp(-0.5 * np.sum(x * x, axis=-1) / v)

    def exact_z(t, x, T):
        return -x / (1.0 + (T - t)) * exact(t, x, T)[..., None]

    driver = Driver(f, _gaussian, p=1, C=0.0, mu=0.0, L=0.0, name="heat")
    return Scenario("heat", _brownian(d, "brownian"), driver,
                    "f = 0, b = 0, sigma = I, h = exp(-|x|^2/2)", exact, exact_z)


def _allen_cahn_f(s, x, y, z):
    return y - y * y * y


def allen_cahn(d: int = 1) -> Scenario:
    def exact(t, x, T):
        return np.ones(np.shape(x)[:-1])

    def exact_z(t, x, T):
        return np.zeros_like(np.asarray(x, dtype=float))

    driver = Driver(_allen_cahn_f, _ones, p=3, C=2.0, f0=_ones_f0, mu=1.0, L=0.0,
                    name="allen-cahn")
    return Scenario("allen-cahn", _brownian(d, "brownian"), driver,
                    "f = y - y^3, h = 1: u = 1 is an exact solution", exact, exact_z)


def allen_cahn_tanh(d: int = 1) -> Scenario:
    # tanh(x_1) is a stationary kink: u''/2 + u - u^3 = 0
    def h(x):
        return np.tanh(x[..., 0])

    def exact(t, x, T):
        return np.tanh(np.asarray(x)[..., 0])

    def exact_z(t, x, T):
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        z[..., 0] = 1.0 / np.cosh(x[..., 0]) ** 2
        return z

    driver = Driver(_allen_cahn_f, h, p=3, C=2.0, f0=_ones_f0, mu=1.0, L=0.0,
                    name="allen-cahn-tanh")
    return Scenario("allen-cahn-tanh", _brownian(d, "brownian"), driver,
                    "f = y - y^3, h = tanh(x_1): stationary kink", exact, exact_z)


def ginzburg_landau(d: int = 1) -> Scenario:
    def b(x):
        return 0.5 * np.cos(x)

    def sigma(x):
        diag = 1.0 + 0.5 * np.sin(x)
        out = np.zeros(x.shape + (d,))
        idx = np.arange(d)
        out[:, idx, idx] = diag
        return out

    def a_t(x):
        return 0.5 * (1.0 + 0.5 * np.sin(x)) * np.cos(x)

    def f(s, x, y, z):
        return -(y * y * y) + 0.5 * z[..., 0]

    def h(x):
        return 1.0 / (1.0 + np.sum(x * x, axis=-1))

    coeffs = CoefficientSet(d, b, sigma, 0.25, a_t, "periodic")
    driver = Driver(f, h, p=3, C=1.0, mu=0.0, L=0.5, name="ginzburg-landau")
    return Scenario("ginzburg-landau", coeffs, driver,
                    "f = -y^3 + z_1/2, sigma = diag(1 + sin(x)/2), b = cos(x)/2, "
                    "h = 1/(1+|x|^2)")


def ou_linear(d: int = 1) -> Scenario:
    def b(x):
        return -x

    def f(s, x, y, z):
        return -y

    def exact(t, x, T):
        tau = T - t
        m = np.asarray(x) * np.exp(-tau)
        v = 0.5 * (1.0 - np.exp(-2 * tau))
        eh = (1.0 + v) ** (-d / 2) * np.exp(-0.5 * np.sum(m * m, axis=-1) / (1.0 + v))
        return np.exp(-tau) * eh

    def exact_z(t, x, T):
        tau = T - t
        v = 0.5 * (1.0 - np.exp(-2 * tau))
        m = np.asarray(x) * np.exp(-tau)
        return -m * np.exp(-tau) / (1.0 + v) * exact(t, x, T)[..., None]

    coeffs = CoefficientSet(d, b, _identity_sigma(d), 1.0, _zero_a_tilde, "ornstein-uhlenbeck")
    driver = Driver(f, _gaussian, p=1, C=1.0, mu=1.0, L=0.0, name="ou-linear")
    return Scenario("ou-linear", coeffs, driver,
                    "b = -x, sigma = I, f = -y, h = exp(-|x|^2/2); drift is unbounded",
                    exact, exact_z)


def fisher_kpp(d: int = 1) -> Scenario:
    def f(s, x, y, z):
        return y * (1.0 - y)

    driver = Driver(f, _gaussian, p=2, C=2.0, f0=_ones_f0, mu=1.0, L=0.0, name="fisher-kpp")
    return Scenario("fisher-kpp", _brownian(d, "brownian"), driver,
                    "f = y(1 - y): f' = 1 - 2y is unbounded above, monotonicity fails",
                    violates=("H.3",))


SCENARIOS = {
    "heat": heat,
    "allen-cahn": allen_cahn,
    "allen-cahn-tanh": allen_cahn_tanh,
    "ginzburg-landau": ginzburg_landau,
    "ou-linear": ou_linear,
    "fisher-kpp": fisher_kpp,
}


def get_scenario(name: str, d: int = 1) -> Scenario:
    try:
        return SCENARIOS[name](d)
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def list_scenarios() -> list:
    return sorted(SCENARIOS)
