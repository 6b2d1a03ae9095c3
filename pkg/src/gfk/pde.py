"""Finite-difference reference for du/dt = -L u - f(t, x, u, sigma^* du/dx), u(T) = h, in d = 1.

Crank-Nicolson for L u = a u''/2 + b u' with homogeneous Neumann conditions
at +-L_fd. The driver is explicit: a predictor step uses f at the previously
computed level, the corrector averages it with f at the predicted level
(Heun), which keeps the scheme second order in time without a Newton solve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .coefficients import CoefficientSet, Driver, a_tilde

__all__ = [
    "FdGrid",
    "FdSolution",
    "TestFunction",
    "bump",
    "fd_solve",
    "fd_solve_forward",
    "weak_form_residual",
    "write_fd_csv",
]


@dataclass(frozen=True)
class FdGrid:
    L_fd: float = 10.0
    dx: float = 0.01
    dt_fd: float = 0.001
    t: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if not (self.dx > 0 and self.dt_fd > 0 and self.L_fd > 0):
            raise ValueError("dx, dt_fd and L_fd must be positive")
        if not self.T > self.t:
            raise ValueError("need T > t")

    @property
    def x(self) -> np.ndarray:
        n = int(round(2 * self.L_fd / self.dx)) + 1
        return np.linspace(-self.L_fd, self.L_fd, n)

    @property
    def times(self) -> np.ndarray:
        nt = max(1, int(round((self.T - self.t) / self.dt_fd)))
        return np.linspace(self.t, self.T, nt + 1)

    def cfl(self, coeffs: CoefficientSet) -> float:
        """dt max|a| / dx^2 on the grid (a diagnostic; the scheme is implicit)."""
        a = coeffs.a(self.x[:, None])[:, 0, 0]
        dt = self.times[1] - self.times[0]
        return float(dt * np.abs(a).max() / (self.x[1] - self.x[0]) ** 2)


@dataclass
class FdSolution:
    grid: FdGrid
    x: np.ndarray
    times: np.ndarray
    u: np.ndarray  # (time, space)
    sigma_grad_u: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)  # sigma at the nodes
    diagnostics: dict = field(default_factory=dict)

    def with_u(self, u: np.ndarray) -> "FdSolution":
        """Same grid with replaced values; sigma du/dx is recomputed."""
        return FdSolution(self.grid, self.x, self.times, u, _sigma_grad(u, self.x, self.sigma),
                          self.sigma, dict(self.diagnostics))

    def level(self, t: float) -> int:
        k = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if not 0 <= k < len(self.times) or abs(self.times[k] - t) > 1e-9 * (1 + abs(t)):
            raise ValueError(f"t={t} is not a time level of the grid")
        return k

    def at(self, t: float, x: Optional[np.ndarray] = None, what: str = "u") -> np.ndarray:
        """Linear interpolation in time (and in space when ``x`` is given)."""
        arr = self.u if what == "u" else self.sigma_grad_u
        dt = self.times[1] - self.times[0]
        s = np.clip((t - self.times[0]) / dt, 0, len(self.times) - 1)
        k = min(int(np.floor(s)), len(self.times) - 2)
        w = s - k
        row = (1 - w) * arr[k] + w * arr[k + 1]
        return row if x is None else np.interp(x, self.x, row)


def _sigma_grad(u, x, sigma):
    # central differences inside, second-order one-sided at the two ends
    return sigma * np.gradient(u, x, axis=-1, edge_order=2)


def _operator_bands(coeffs: CoefficientSet, x: np.ndarray):
    """Tridiagonal L = a/2 d^2 + b d with Neumann ghost nodes, as (lower, diag, upper)."""
    dx = x[1] - x[0]
    a = coeffs.a(x[:, None])[:, 0, 0]
    b = coeffs.b(x[:, None])[:, 0]
    lower = 0.5 * a / dx**2 - 0.5 * b / dx
    upper = 0.5 * a / dx**2 + 0.5 * b / dx
    diag = -a / dx**2
    # ghost node u_{-1} = u_1: the first-derivative term drops out at the ends
    upper[0] = a[0] / dx**2
    lower[-1] = a[-1] / dx**2
    lower[0] = upper[-1] = 0.0
    return lower, diag, upper


def _apply(bands, u):
    lower, diag, upper = bands
    out = diag * u
    out[1:] += lower[1:] * u[:-1]
    out[:-1] += upper[:-1] * u[1:]
    return out


def _march(coeffs, driver, grid, start, time_of_step, corrector=True, growth_limit=10.0):
    x = grid.x
    times = grid.times
    dt = times[1] - times[0]
    bands = _operator_bands(coeffs, x)
    lower, diag, upper = bands
    ab = np.zeros((3, len(x)))
    ab[0, 1:] = -0.5 * dt * upper[:-1]
    ab[1] = 1.0 - 0.5 * dt * diag
    ab[2, :-1] = -0.5 * dt * lower[1:]
    sigma = coeffs.sigma(x[:, None])[:, 0, 0]
    xs = x[:, None]
    n_levels = len(times)
    out = np.empty((n_levels, len(x)))
    out[0] = start

    def driver_at(m, u):
        return driver.f(time_of_step(m), xs, u, _sigma_grad(u, x, sigma)[:, None])

    for m in range(1, n_levels):
        prev = out[m - 1]
        lin = prev + 0.5 * dt * _apply(bands, prev)
        f_prev = driver_at(m - 1, prev)
        pred = linalg.solve_banded((1, 1), ab, lin + dt * f_prev)
        if corrector:
            f_pred = driver_at(m, pred)
            new = linalg.solve_banded((1, 1), ab, lin + 0.5 * dt * (f_prev + f_pred))
        else:
            new = pred
        size_prev = max(np.abs(prev).max(), 1e-12)
        if not np.all(np.isfinite(new)) or np.abs(new).max() > growth_limit * size_prev:
            raise FloatingPointError(f"finite-difference solution blew up after {m} steps")
        out[m] = new
    return out, sigma


def fd_solve(coeffs: CoefficientSet, driver: Driver, grid: FdGrid) -> FdSolution:
    """March backward from u(T) = h; the driver should already be truncated."""
    if coeffs.d != 1:
        raise ValueError("the finite-difference reference is one-dimensional")
    x, times = grid.x, grid.times
    h = driver.h(x[:, None])
    rev, sigma = _march(coeffs, driver, grid, h, lambda m: times[len(times) - 1 - m])
    u = rev[::-1].copy()
    u[-1] = h  # exact terminal slice
    return FdSolution(grid, x, times, u, _sigma_grad(u, x, sigma), sigma,
                      {"cfl": grid.cfl(coeffs)})


def fd_solve_forward(coeffs: CoefficientSet, driver: Driver, grid: FdGrid) -> FdSolution:
    """Initial-value form dv/dt = L v + f(x, v, sigma^* dv/dx), v(0) = h on [0, T - t].

    For a time-independent driver v(T - t) = u(t), so flipping the returned
    levels reproduces :func:`fd_solve`.
    """
    if coeffs.d != 1:
        raise ValueError("the finite-difference reference is one-dimensional")
    x = grid.x
    h = driver.h(x[:, None])
    v, sigma = _march(coeffs, driver, grid, h, lambda m: 0.0)
    times = grid.times - grid.t
    return FdSolution(grid, x, times, v, _sigma_grad(v, x, sigma), sigma,
                      {"cfl": grid.cfl(coeffs), "direction": "forward"})


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported test function with its analytic derivative (d = 1)."""

    value: Callable
    grad: Callable
    support: tuple

    __test__ = False  # keep pytest from collecting this class


def bump(center: float = 0.0, radius: float = 1.0) -> TestFunction:
    """exp(1 - 1/(1 - r^2)) with r = |x - center| / radius; smooth, support [c - R, c + R]."""

    def value(x):
        r = (np.asarray(x, dtype=float) - center) / radius
        out = np.zeros_like(r)
        inside = np.abs(r) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out

    def grad(x):
        r = (np.asarray(x, dtype=float) - center) / radius
        out = np.zeros_like(r)
        inside = np.abs(r) < 1
        ri = r[inside]
        out[inside] = value(x)[inside] * (-2 * ri / (1 - ri**2) ** 2) / radius
        return out

    return TestFunction(value, grad, (center - radius, center + radius))


def _trapezoid(values, spacing, axis=-1):
    return np.trapezoid(values, dx=spacing, axis=axis)


def weak_form_residual(solution: FdSolution, coeffs: CoefficientSet, driver: Driver,
                       phi: TestFunction, t: float, components: bool = False):
    """|LHS - RHS| of the test-function identity on [t, T]:

        int u(t) phi - int u(T) phi + 1/2 int int (sigma^* u')(sigma^* phi')
            + int int u div((b - A~) phi)  =  int int f(s, x, u, sigma^* u') phi

    Space integrals use the trapezoid rule on the FD nodes, time integrals
    the trapezoid rule over the FD time levels.
    """
    x = solution.x
    lo, hi = phi.support
    if lo <= x[0] or hi >= x[-1]:
        raise ValueError("test function support must lie inside the FD domain")
    dx = x[1] - x[0]
    k0 = solution.level(t)
    times = solution.times[k0:]
    dt = times[1] - times[0] if len(times) > 1 else 0.0
    u = solution.u[k0:]
    sgu = solution.sigma_grad_u[k0:]
    xs = x[:, None]
    ph, dph = phi.value(x), phi.grad(x)

    def drift_part(xx):
        return (coeffs.b(xx[:, None])[:, 0] - a_tilde(coeffs, xx[:, None])[:, 0]) * phi.value(xx)

    step = 1e-4
    div = (drift_part(x + step) - drift_part(x - step)) / (2 * step)

    t1 = _trapezoid(u[0] * ph, dx)
    t2 = _trapezoid(u[-1] * ph, dx)
    grad_term = _trapezoid(sgu * (solution.sigma * dph), dx)
    div_term = _trapezoid(u * div, dx)
    f_term = np.array([
        _trapezoid(driver.f(s, xs, u[k], sgu[k][:, None]) * ph, dx) for k, s in enumerate(times)
    ])
    if len(times) > 1:
        t3 = 0.5 * _trapezoid(grad_term, dt)
        t4 = _trapezoid(div_term, dt)
        t5 = _trapezoid(f_term, dt)
    else:
        t3 = t4 = t5 = 0.0
    residual = abs(t1 - t2 + t3 + t4 - t5)
    if components:
        return residual, {"u(t)": t1, "u(T)": t2, "gradient": t3, "divergence": t4, "driver": t5}
    return residual


def write_fd_csv(solution: FdSolution, path, times=None) -> None:
    """Slices of u and sigma^* du/dx as rows t, x, u, sigma_grad_u."""
    levels = range(len(solution.times)) if times is None else [solution.level(t) for t in times]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "u", "sigma_grad_u"])
        for k in levels:
            tk = solution.times[k]
            for xj, uj, gj in zip(solution.x, solution.u[k], solution.sigma_grad_u[k]):
                w.writerow([f"{tk:.17g}", f"{xj:.17g}", f"{uj:.17g}", f"{gj:.17g}"])
