"""Backward regression Monte Carlo for Y_s = h(X_T) + int_s^T f dr - int_s^T Z dW.

One backward step on [t_i, t_{i+1}] with theta in (0, 1]:

    Z_i = E_i[(Y_{i+1} - E_i Y_{i+1}) dW_i] / dt
    Y_i = E_i[Y_{i+1} + (1 - theta) dt f_{i+1}] + theta dt f(t_i, X_i, Y_i, Z_i)

where E_i is least-squares regression on a basis in X_i and the implicit
y-dependence is resolved by Picard iteration. theta = 1 is the implicit
Euler scheme; the default theta = 1/2 is the trapezoidal rule.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficients import Driver, SolutionField, truncate_driver, untransform_solution
from .regression import RegressionBasis
from .sde import PathEnsemble, TimeGrid
from .weights import WeightedField, WeightedSpace, weight_mass, weighted_lp_norm

__all__ = [
    "BsdeSolution",
    "MomentReport",
    "NoiseFloor",
    "solve_bsde",
    "truncation_sweep",
    "representation_field",
    "apriori_moment_report",
    "noise_floor",
    "path_norm",
    "untransform_bsde",
    "default_truncation",
]


@dataclass
class BsdeSolution:
    grid: TimeGrid
    Y: np.ndarray  # (M, N + 1)
    Z: np.ndarray  # (M, N, d)
    u_coeffs: list  # N + 1 coefficient arrays
    z_coeffs: list  # N coefficient arrays, each (n_functions, d)
    bases: list = field(repr=False)  # fitted step bases, evaluate the coefficients
    diagnostics: dict = field(default_factory=dict)
    driver: Optional[Driver] = field(default=None, repr=False)
    basis: Optional[RegressionBasis] = None
    picard_iters: int = 3
    theta: float = 0.5

    @property
    def d(self) -> int:
        return self.Z.shape[2]

    def u(self, step: int, x: np.ndarray) -> np.ndarray:
        """x -> u(t_step, x) from the stored regression coefficients."""
        return self.bases[step](self.u_coeffs[step], x)

    def z(self, step: int, x: np.ndarray) -> np.ndarray:
        """x -> (sigma^* grad u)(t_step, x), shape (n, d)."""
        return self.bases[step](self.z_coeffs[step], x)

    def hull(self, step: int):
        return self.bases[step].hull


def _check_finite(values, what, step):
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{what} produced non-finite values at step {step}")


def solve_bsde(ensemble: PathEnsemble, driver: Driver, basis: Optional[RegressionBasis] = None,
               picard_iters: int = 3, theta: float = 0.5) -> BsdeSolution:
    """Solve the BSDE driven by ``driver`` along the paths of ``ensemble``."""
    if picard_iters < 1:
        raise ValueError("picard_iters must be >= 1")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    basis = basis or RegressionBasis.default(ensemble.d)
    grid = ensemble.grid
    N, M, d = grid.N_steps, ensemble.M, ensemble.d
    times, dt = grid.times, grid.dt
    X, dW = ensemble.X, ensemble.dW

    Y = np.empty((N + 1, M)).T
    Z = np.empty((N, M, d)).transpose(1, 0, 2)
    u_coeffs = [None] * (N + 1)
    z_coeffs = [None] * N
    bases = [None] * (N + 1)
    residual = np.zeros(N)
    degenerate = np.zeros(N + 1, dtype=bool)

    Y[:, N] = driver.h(X[:, N])
    _check_finite(Y[:, N], "terminal function", N)
    fit = basis.fit(X[:, N])
    u_coeffs[N] = fit.solve(Y[:, N])
    degenerate[N] = fit.degenerate
    fit.release()
    bases[N] = fit

    for i in range(N - 1, -1, -1):
        xi = X[:, i]
        y_next = Y[:, i + 1]
        fit = basis.fit(xi)
        cy = fit.solve(y_next)
        y_hat = fit.fitted(cy)
        resid = y_next - y_hat
        residual[i] = np.sqrt(np.mean(resid**2))

        cz = fit.solve(resid[:, None] * dW[:, i] / dt)
        z = fit.fitted(cz)
        _check_finite(z, "Z regression", i)

        if theta < 1.0:
            # lag Z by one step at the terminal node, where no Z exists
            z_next = Z[:, i + 1] if i + 1 < N else z
            f_next = driver.f(times[i + 1], X[:, i + 1], y_next, z_next)
            _check_finite(f_next, "driver", i + 1)
            cb = fit.solve(y_next + (1.0 - theta) * dt * f_next)
            base = fit.fitted(cb)
        else:
            base = y_hat

        y = base
        for _ in range(picard_iters):
            fy = driver.f(times[i], xi, y, z)
            _check_finite(fy, "driver", i)
            y = base + theta * dt * fy

        cu = fit.solve(y)
        Y[:, i] = fit.fitted(cu)
        Z[:, i] = z
        u_coeffs[i], z_coeffs[i] = cu, cz
        degenerate[i] = fit.degenerate
        fit.release()
        bases[i] = fit

    diagnostics = {
        "regression_residual": residual,
        "degenerate_steps": np.flatnonzero(degenerate),
    }
    return BsdeSolution(grid, Y, Z, u_coeffs, z_coeffs, bases, diagnostics,
                        driver, basis, picard_iters, theta)


def default_truncation(sup_h: float) -> float:
    """Production truncation level n >= 2 max(1, sup|h|)."""
    return 2.0 * max(1.0, float(sup_h))


def path_norm(values: np.ndarray, grid: TimeGrid, mass: float) -> float:
    """Discrete version of (E int_t^T int |v(s, X_s^{t,x})|^2 rho^{-1}(x) dx ds)^{1/2}.

    Starting points are assumed drawn from rho^{-1} / mass, so a path average
    times ``mass`` estimates the spatial integral. Arrays with N + 1 time
    nodes use the trapezoid rule in time, arrays with N nodes the left
    Riemann sum.
    """
    v = np.asarray(values, dtype=float)
    sq = v**2 if v.ndim == 2 else np.sum(v**2, axis=tuple(range(2, v.ndim)))
    per_step = sq.mean(axis=0)
    n = grid.N_steps
    if len(per_step) == n + 1:
        w = np.full(n + 1, grid.dt)
        w[[0, -1]] *= 0.5
    elif len(per_step) == n:
        w = np.full(n, grid.dt)
    else:
        raise ValueError("values do not match the time grid")
    return float(np.sqrt(mass * np.dot(w, per_step)))


def _mass(space, d):
    return space.mass if space is not None else weight_mass(d, d + 1)


def truncation_sweep(ensemble: PathEnsemble, driver: Driver, basis: Optional[RegressionBasis],
                     levels, picard_iters: int = 3, theta: float = 0.5,
                     space: Optional[WeightedSpace] = None) -> list:
    """Solve with f_n at each level on one shared ensemble.

    Returns ``[(n, solution, delta)]`` with delta(n) the discrete weighted
    L^2 distance between Y^(n) and Y at the largest level.
    """
    levels = [float(n) for n in levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be non-empty and strictly increasing")
    sols = [solve_bsde(ensemble, truncate_driver(driver, n), basis, picard_iters, theta)
            for n in levels]
    mass = _mass(space, ensemble.d)
    top = sols[-1].Y
    return [(n, s, path_norm(s.Y - top, ensemble.grid, mass)) for n, s in zip(levels, sols)]


def representation_field(solution: BsdeSolution, space: WeightedSpace, step: int = 0) -> WeightedField:
    """u(t_step, .) on the space's grid; ``extrapolated`` flags nodes outside the path hull."""
    pts = space.points.reshape(-1, space.d)
    values = solution.u(step, pts).reshape(space.shape)
    lo, hi = solution.hull(step)
    outside = np.any((pts < lo) | (pts > hi), axis=1).reshape(space.shape)
    return WeightedField(space.axes, values, extrapolated=outside)


def z_field(solution: BsdeSolution, space: WeightedSpace, step: int) -> WeightedField:
    pts = space.points.reshape(-1, space.d)
    values = solution.z(step, pts).reshape(space.shape + (space.d,))
    lo, hi = solution.hull(step)
    outside = np.any((pts < lo) | (pts > hi), axis=1).reshape(space.shape)
    return WeightedField(space.axes, values, extrapolated=outside)


@dataclass
class MomentReport:
    A: float
    B: float
    R: float
    A_noise: float
    B_noise: float
    h_norm: float
    f0_norm: float
    C_p: float

    @property
    def within_bound(self) -> bool:
        return self.A + self.B <= self.R


def _bootstrap_se(per_path: np.ndarray, resamples: int, seed: int) -> float:
    rng = np.random.Generator(np.random.Philox(seed))
    M = len(per_path)
    means = [per_path[rng.integers(0, M, M)].mean() for _ in range(resamples)]
    return float(np.std(means, ddof=1))


def apriori_moment_report(solution: BsdeSolution, driver: Driver, space: WeightedSpace,
                          C_p: float = 2.0, resamples: int = 16, seed: int = 0) -> MomentReport:
    """Estimates of the uniform 2p-moment quantities and their bound.

    A = E int_t^T int |Y|^{2p} rho^{-1} dx ds and
    B = E int_t^T int |Y|^{2p-2} |Z|^2 rho^{-1} dx ds, against
    R = C_p (||h||^{2p}_{L^{2p}_rho} + int_t^T ||f0(s)||^{2p}_{L^{2p}_rho} ds).
    Starting points must have been drawn from the weight density.
    """
    p = driver.p
    grid = solution.grid
    dt = grid.dt
    mass = space.mass
    Y = solution.Y[:, :-1]
    a_path = mass * dt * np.sum(np.abs(Y) ** (2 * p), axis=1)
    z2 = np.sum(solution.Z**2, axis=2)
    b_path = mass * dt * np.sum(np.abs(Y) ** (2 * p - 2) * z2, axis=1)
    h_norm = weighted_lp_norm(space, space.evaluate(driver.h), 2 * p)
    times = grid.times
    f0_int = np.array([
        weighted_lp_norm(space, space.evaluate(lambda x, s=s: driver.f0(s, x)), 2 * p) ** (2 * p)
        for s in times
    ])
    w = np.full(len(times), dt)
    w[[0, -1]] *= 0.5
    f0_norm_2p = float(np.dot(w, f0_int))
    R = C_p * (h_norm ** (2 * p) + f0_norm_2p)
    return MomentReport(
        A=float(a_path.mean()),
        B=float(b_path.mean()),
        R=float(R),
        A_noise=_bootstrap_se(a_path, resamples, seed),
        B_noise=_bootstrap_se(b_path, resamples, seed + 1),
        h_norm=h_norm,
        f0_norm=f0_norm_2p ** (1.0 / (2 * p)),
        C_p=C_p,
    )


@dataclass
class NoiseFloor:
    """Bootstrap standard errors in the discrete weighted norms."""

    Y: float
    Z: float
    u0: float
    resamples: int


def _values_on_paths(solution: BsdeSolution, X: np.ndarray):
    N, M = solution.grid.N_steps, X.shape[0]
    Y = np.empty((M, N + 1))
    Z = np.empty((M, N, solution.d))
    for i in range(N + 1):
        Y[:, i] = solution.u(i, X[:, i])
        if i < N:
            Z[:, i] = solution.z(i, X[:, i]).reshape(M, -1)
    return Y, Z


def _inside_hull(solution: BsdeSolution, X: np.ndarray) -> np.ndarray:
    """(M, N + 1) mask of path states inside the fitted region of each step."""
    inside = np.empty(X.shape[:2], dtype=bool)
    for i in range(X.shape[1]):
        lo, hi = solution.hull(i)
        inside[:, i] = np.all((X[:, i] >= lo) & (X[:, i] <= hi), axis=-1)
    return inside


def noise_floor(solution: BsdeSolution, ensemble: PathEnsemble, space: WeightedSpace,
                resamples: int = 16, seed: int = 0, eval_paths: int = 20_000) -> NoiseFloor:
    """Re-solve on ``resamples`` bootstrap resamples of the paths.

    Each resampled solution is evaluated on the first ``eval_paths``
    original paths and on the space grid; the floors are root-mean-square
    deviations from ``solution`` in :func:`path_norm` (Y, Z) and in L^2_rho
    (u at t). States outside a resample's path hull are skipped: there the
    gap is extrapolation, not sampling noise.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    grid, mass, M = ensemble.grid, space.mass, ensemble.M
    X_eval = ensemble.X[: min(M, eval_paths)]
    Y_ref, Z_ref = _values_on_paths(solution, X_eval)
    u_ref = representation_field(solution, space).values
    dy = dz = du = 0.0
    for _ in range(resamples):
        idx = rng.integers(0, M, M)
        sol_b = solve_bsde(ensemble.subset(idx), solution.driver, solution.basis,
                           solution.picard_iters, solution.theta)
        sol_b = _rescaled_like(sol_b, solution)
        Yb, Zb = _values_on_paths(sol_b, X_eval)
        inside = _inside_hull(sol_b, X_eval)
        dy += path_norm(np.where(inside, Yb - Y_ref, 0.0), grid, mass) ** 2
        dz += path_norm(np.where(inside[:, :-1, None], Zb - Z_ref, 0.0), grid, mass) ** 2
        field_b = representation_field(sol_b, space)
        diff = np.where(field_b.extrapolated, 0.0, field_b.values - u_ref)
        du += space.integrate(diff**2)
    n = resamples
    return NoiseFloor(float(np.sqrt(dy / n)), float(np.sqrt(dz / n)), float(np.sqrt(du / n)), n)


def _rescaled_like(sol_b, solution):
    mu = solution.diagnostics.get("untransformed_mu")
    return untransform_bsde(sol_b, mu) if mu is not None else sol_b


def untransform_bsde(solution: BsdeSolution, mu: Optional[float] = None) -> BsdeSolution:
    """Apply (Y, Z) -> (e^{-mu s} Y, e^{-mu s} Z) to a solve of the transformed equation."""
    if mu is None:
        mu = solution.driver.transform_mu if solution.driver is not None else 0.0
    times = solution.grid.times
    Yf, Zf = untransform_solution(SolutionField(times, solution.Y),
                                  SolutionField(times[:-1], solution.Z), mu)
    factor = np.exp(-mu * times)
    u_coeffs = [c * factor[i] for i, c in enumerate(solution.u_coeffs)]
    z_coeffs = [c * factor[i] for i, c in enumerate(solution.z_coeffs)]
    diagnostics = dict(solution.diagnostics, untransformed_mu=mu)
    return dataclasses.replace(solution, Y=Yf.values, Z=Zf.values, u_coeffs=u_coeffs,
                               z_coeffs=z_coeffs, diagnostics=diagnostics)
