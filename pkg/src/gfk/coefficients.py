"""Diffusion coefficients, BSDE drivers and the probe-based hypothesis checks.

Conventions for the vectorised callables (M evaluation points, dimension d):

* ``b(x)``: ``(M, d) -> (M, d)``
* ``sigma(x)``: ``(M, d) -> (M, d, d)``
* ``f(s, x, y, z)``: ``x (M, d)``, ``y (M,)``, ``z (M, d)`` -> ``(M,)``; ``s`` is
  a scalar or an ``(M,)`` array
* ``f0(s, x)`` and ``h(x)``: ``(M, d) -> (M,)``
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .weights import WeightedSpace

__all__ = [
    "CoefficientSet",
    "Driver",
    "ConditionResult",
    "ValidationReport",
    "SolutionField",
    "validate_conditions",
    "exp_transform",
    "untransform_solution",
    "project",
    "truncate_driver",
    "a_tilde",
]


@dataclass(frozen=True)
class CoefficientSet:
    d: int
    b: Callable
    sigma: Callable
    D: float
    a_tilde_exact: Optional[Callable] = None
    name: str = ""

    def a(self, x: np.ndarray) -> np.ndarray:
        s = self.sigma(np.asarray(x, dtype=float))
        return s @ np.swapaxes(s, -1, -2)


def _zero_f0(s, x):
    return np.zeros(np.shape(x)[0])


@dataclass(frozen=True)
class Driver:
    f: Callable
    h: Callable
    p: int = 1
    C: float = 0.0
    f0: Callable = field(default=_zero_f0)
    L: float = 0.0
    mu: float = 0.0
    name: str = ""
    truncation: Optional[float] = None
    # mu removed by exp_transform to reach this driver; 0 for an original driver
    transform_mu: float = 0.0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("growth exponent p must be an integer >= 1")

    def __call__(self, s, x, y, z):
        return self.f(s, x, y, z)


@dataclass(frozen=True)
class SolutionField:
    """Values indexed by (path, time node, ...) on the time nodes ``times``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim < 2 or values.shape[1] != len(times):
            raise ValueError("values must carry the time axis second, matching times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


# ---------------------------------------------------------------------------
# hypothesis validation


@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_margin: float
    worst_probe: dict

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"{self.name}: {status} (worst margin {self.worst_margin:.3e})"


@dataclass
class ValidationReport:
    conditions: list
    probes: int
    seed: int
    box: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failed(self) -> list:
        return [c.name for c in self.conditions if not c.passed]

    def __getitem__(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(str(c) for c in self.conditions)


def _worst(name, excess, probes):
    # condition holds iff every excess entry is <= 0
    k = int(np.argmax(excess))
    probe = {key: np.asarray(v)[k].tolist() for key, v in probes.items()}
    return ConditionResult(name, bool(excess[k] <= 0), float(excess[k]), probe)


def _doubling_ratio(space: WeightedSpace, fn, two_p: int) -> float:
    """I(2L) / I(L) for I(L) the weighted integral of |fn|^{2p} over [-L, L]^d."""
    big = space.with_domain(2 * space.L_domain)
    pts_small = space.points.reshape(-1, space.d)
    pts_big = big.points.reshape(-1, space.d)
    i_small = space.integrate(np.abs(fn(pts_small).reshape(space.shape)) ** two_p)
    i_big = big.integrate(np.abs(fn(pts_big).reshape(big.shape)) ** two_p)
    if not (np.isfinite(i_small) and np.isfinite(i_big)):
        return float("inf")
    if i_big == 0.0:
        return 1.0
    return i_big / i_small if i_small > 0 else float("inf")


def validate_conditions(
    coeffs: CoefficientSet,
    driver: Driver,
    space: WeightedSpace,
    probes: int = 10_000,
    seed: int = 0,
    T: float = 1.0,
    y_range: float = 10.0,
    z_range: float = 10.0,
    growth_ratio: float = 1.5,
) -> ValidationReport:
    """Probe (H.1)-(H.5) at random points of [0,T] x [-L,L]^d x [-y_range,y_range] x box.

    Integrability in (H.1) and of f0 in (H.2) is judged by the weighted
    integral changing by less than ``growth_ratio`` when the box is doubled.
    """
    if probes < 100:
        raise ValueError("probes must be >= 100")
    d = coeffs.d
    rng = np.random.Generator(np.random.Philox(seed))
    s = rng.uniform(0, T, probes)
    x = rng.uniform(-space.L_domain, space.L_domain, (probes, d))
    y1 = rng.uniform(-y_range, y_range, probes)
    y2 = rng.uniform(-y_range, y_range, probes)
    z1 = rng.uniform(-z_range, z_range, (probes, d))
    z2 = rng.uniform(-z_range, z_range, (probes, d))
    two_p = 2 * driver.p
    results = []

    ratio = _doubling_ratio(space, driver.h, two_p)
    results.append(ConditionResult("H.1", ratio <= growth_ratio, ratio, {"I(2L)/I(L)": ratio}))

    f1 = driver.f(s, x, y1, z1)
    f0 = driver.f0(s, x)
    bound = driver.C * (np.abs(f0) + np.abs(y1) ** driver.p + np.linalg.norm(z1, axis=1))
    excess = np.abs(f1) - bound - 1e-9 * (1 + bound)
    h2 = _worst("H.2", excess, {"s": s, "x": x, "y": y1, "z": z1})
    for si in (0.0, 0.5 * T, T):
        r = _doubling_ratio(space, lambda pts, si=si: driver.f0(si, pts), two_p)
        if r > growth_ratio:
            h2 = ConditionResult("H.2", False, r, {"s": si, "f0 I(2L)/I(L)": r})
            break
    results.append(h2)

    f2 = driver.f(s, x, y2, z1)
    dy = y1 - y2
    scale = 1 + np.abs(dy) * (np.abs(f1) + np.abs(f2))
    excess = dy * (f1 - f2) - driver.mu * dy**2 - 1e-9 * scale
    results.append(_worst("H.3", excess, {"s": s, "x": x, "y1": y1, "y2": y2, "z": z1}))

    f3 = driver.f(s, x, y1, z2)
    dz = np.linalg.norm(z1 - z2, axis=1)
    excess = np.abs(f1 - f3) - driver.L * dz - 1e-9 * (1 + np.abs(f1) + np.abs(f3))
    results.append(_worst("H.4", excess, {"s": s, "x": x, "y": y1, "z1": z1, "z2": z2}))

    a = coeffs.a(x)
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(axis=(-1, -2))
    xi = rng.standard_normal((probes, d))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    quad = np.einsum("mi,mij,mj->m", xi, a, xi)
    excess = np.maximum(asym - 1e-12, coeffs.D - quad - 1e-12 * (1 + abs(coeffs.D)))
    results.append(_worst("H.5", excess, {"x": x, "xi": xi}))

    box = {"T": T, "x": space.L_domain, "y": y_range, "z": z_range}
    return ValidationReport(results, probes, seed, box)


# ---------------------------------------------------------------------------
# exponential transform


def exp_transform(driver: Driver, T: float) -> Driver:
    """Remove the monotonicity constant: f~(r,x,y,z) = e^{mu r} f(r,x,e^{-mu r}y,e^{-mu r}z) - mu y.

    The terminal value becomes e^{mu T} h and the result is monotone with
    constant 0. Growth constants are re-derived so (H.2) still holds.
    """
    mu = float(driver.mu)
    if mu == 0.0:
        return driver
    f, h, f0, p = driver.f, driver.h, driver.f0, driver.p

    def f_tilde(r, x, y, z):
        decay = np.exp(-mu * np.asarray(r, dtype=float))
        zz = z * (decay[..., None] if np.ndim(decay) else decay)
        return f(r, x, decay * y, zz) / decay - mu * y

    def h_tilde(x):
        return np.exp(mu * T) * h(x)

    def f0_tilde(s, x):
        return np.exp(mu * np.asarray(s, dtype=float)) * np.abs(f0(s, x)) + 1.0

    # |f~| <= C e^{mu r}|f0| + C K |y|^p + C |z| + |mu|(1 + |y|^p), K = max_r e^{(1-p) mu r}
    K = max(1.0, np.exp((1 - p) * mu * T))
    C_tilde = driver.C * K + abs(mu)
    return dataclasses.replace(
        driver,
        f=f_tilde,
        h=h_tilde,
        f0=f0_tilde,
        C=C_tilde,
        mu=0.0,
        name=f"{driver.name}~" if driver.name else "",
        transform_mu=driver.transform_mu + mu,
    )


def untransform_solution(Y_tilde: SolutionField, Z_tilde: SolutionField, mu: float):
    """Map (e^{mu s} Y, e^{mu s} Z) back to (Y, Z) node by node.

    ``Z_tilde`` may live on the left endpoints of ``Y_tilde``'s grid (the
    usual layout for Z on N intervals).
    """
    ty, tz = Y_tilde.times, Z_tilde.times
    same = len(tz) == len(ty) and np.array_equal(tz, ty)
    left = len(tz) == len(ty) - 1 and np.array_equal(tz, ty[:-1])
    if not (same or left):
        raise ValueError("Y and Z fields are not on the same time grid")

    def scale(sf):
        factor = np.exp(-mu * sf.times)
        shape = (1, len(factor)) + (1,) * (sf.values.ndim - 2)
        return SolutionField(sf.times, sf.values * factor.reshape(shape))

    return scale(Y_tilde), scale(Z_tilde)


# ---------------------------------------------------------------------------
# truncation


def project(y, n: float):
    """Pi_n(y) = min(n, |y|) y / |y|, with Pi_n(0) = 0; in one dimension a clamp."""
    return np.clip(y, -n, n)


def truncate_driver(driver: Driver, n: float) -> Driver:
    """f_n(s, x, y, z) = f(s, x, Pi_n(y), z): globally Lipschitz in y, same mu and L."""
    if not n > 0:
        raise ValueError(f"truncation level must be positive, got {n}")
    f = driver.f
    n = float(n)

    def f_n(s, x, y, z):
        return f(s, x, np.clip(y, -n, n), z)

    return dataclasses.replace(driver, f=f_n, truncation=n)


def a_tilde(coeffs: CoefficientSet, x, rel_step: float = 1e-5) -> np.ndarray:
    """A~_j(x) = 1/2 sum_i d a_ij / d x_i, by central differences unless a closed form is registered."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if coeffs.d == 1 and x.shape[-1] != 1:
        x = x.reshape(-1, 1)
    if coeffs.a_tilde_exact is not None:
        return coeffs.a_tilde_exact(x)
    d = coeffs.d
    h = rel_step * (1.0 + np.linalg.norm(x, axis=1))
    out = np.zeros_like(x)
    for i in range(d):
        step = np.zeros_like(x)
        step[:, i] = h
        da = (coeffs.a(x + step) - coeffs.a(x - step)) / (2 * h)[:, None, None]
        out += 0.5 * da[:, i, :]
    return out
