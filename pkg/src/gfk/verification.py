"""Cross-checks between the Monte Carlo solver, the FD oracle and the forward diffusion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bsde import BsdeSolution, _rescaled_like, solve_bsde, z_field
from .coefficients import CoefficientSet
from .pde import FdSolution
from .sde import PathEnsemble, TimeGrid, resimulate_from, terminal_states
from .weights import WeightedField, WeightedSpace, weight_mass

__all__ = [
    "SandwichReport",
    "CheckResult",
    "FlowReport",
    "norm_equivalence_check",
    "representation_error",
    "relative_weighted_error",
    "flow_identity_check",
    "flow_identity_report",
    "z_gradient_consistency",
    "write_verification_csv",
]


@dataclass
class SandwichReport:
    outer: float  # int |phi| rho^{-1} dx
    middle: float  # E int |phi(X_T^{t,x})| rho^{-1} dx
    std_error: float
    window: tuple

    @property
    def ratio(self) -> float:
        return self.middle / self.outer

    @property
    def within(self) -> bool:
        lo, hi = self.window
        return lo <= self.ratio <= hi


def norm_equivalence_check(coeffs: CoefficientSet, space: WeightedSpace, phi: WeightedField,
                           grid: TimeGrid, M: int, seed: int, window=(0.2, 5.0),
                           workers: Optional[int] = None) -> SandwichReport:
    """Monte Carlo estimate of the middle term of the equivalence-of-norms sandwich.

    Path k starts at quadrature node k mod n; the middle term is the
    quadrature sum of rho^{-1}(x_j) times the per-node mean of |phi(X_T)|.
    """
    nodes = space.points.reshape(-1, space.d)
    W = space.measure.reshape(-1)
    n = len(nodes)
    if M < n:
        raise ValueError(f"need at least one path per quadrature node (M >= {n})")
    owner = np.arange(M) % n
    xT = terminal_states(coeffs, nodes[owner], grid, seed, workers)
    vals = np.abs(phi(xT))
    count = np.bincount(owner, minlength=n)
    mean = np.bincount(owner, vals, n) / count
    sq = np.bincount(owner, vals * vals, n) / count
    var = np.maximum(sq - mean**2, 0.0) * count / np.maximum(count - 1, 1)
    middle = float(np.dot(W, mean))
    se = float(np.sqrt(np.sum(W**2 * var / count))) if count.min() > 1 else float("nan")
    outer = space.integrate(np.abs(phi.values))
    if not outer > 0:
        raise ValueError("test function vanishes on the grid")
    return SandwichReport(outer, middle, se, tuple(window))


def relative_weighted_error(space: WeightedSpace, approx: np.ndarray, reference: np.ndarray,
                            mask: Optional[np.ndarray] = None) -> float:
    """||approx - reference||_{L^2_rho} / max(||reference||_{L^2_rho}, 1e-12) over ``mask``."""
    keep = np.ones(space.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("empty overlap region")
    m = space.measure * keep
    diff = np.sqrt(np.sum(m * (np.asarray(approx) - reference) ** 2))
    ref = np.sqrt(np.sum(m * np.asarray(reference) ** 2))
    return float(diff / max(ref, 1e-12))


def _overlap(space, fd, field):
    mask = (space.axis >= fd.x[0]) & (space.axis <= fd.x[-1])
    if field is not None and field.extrapolated is not None:
        mask = mask & ~field.extrapolated
    return mask


def representation_error(bsde_u: WeightedField, fd_u: FdSolution, space: WeightedSpace,
                         t: float) -> float:
    """Relative L^2_rho gap between the regression u(t, .) and the FD u(t, .)."""
    if space.d != 1 or bsde_u.d != 1:
        raise ValueError("representation_error compares against the 1D FD oracle")
    mask = _overlap(space, fd_u, bsde_u)
    ref = fd_u.at(t, space.axis)
    return relative_weighted_error(space, bsde_u.values, ref, mask)


def _node_norm(values, mass):
    return float(np.sqrt(mass * np.mean(np.asarray(values) ** 2)))


def _restart_u(solution, restarted):
    sol = solve_bsde(restarted, solution.driver, solution.basis, solution.picard_iters,
                     solution.theta)
    return _rescaled_like(sol, solution)


def _restart_pair(solution, ensemble, step, seed, space):
    N = ensemble.grid.N_steps
    if not 0 < step < N:
        raise ValueError(f"step must satisfy 0 < step < {N}")
    restarted = resimulate_from(ensemble, step, seed)
    sol_r = _restart_u(solution, restarted)
    x = ensemble.X[:, step]
    return restarted, x, solution.u(step, x), sol_r.u(0, x), _mass(space, ensemble)


def flow_identity_check(solution: BsdeSolution, ensemble: PathEnsemble, step: int,
                        seed: Optional[int] = None, space: Optional[WeightedSpace] = None) -> float:
    """Discrete weighted L^2 gap at node ``step`` between u from the original solve
    and u from a fresh solve restarted at the states X[:, step]."""
    _, _, u_orig, u_rest, mass = _restart_pair(solution, ensemble, step, seed, space)
    return _node_norm(u_rest - u_orig, mass)


def _mass(space, ensemble):
    return space.mass if space is not None else weight_mass(ensemble.d, ensemble.d + 1)


@dataclass
class FlowReport:
    discrepancy: float
    noise_original: float
    noise_restart: float

    @property
    def pooled_noise(self) -> float:
        return float(np.hypot(self.noise_original, self.noise_restart))


def _tail(ensemble, step):
    grid = ensemble.grid.tail(step)
    return PathEnsemble(grid, ensemble.X[:, step], ensemble.X[:, step:], ensemble.dW[:, step:],
                        ensemble.seed, ensemble.coeffs)


def _node_noise(solution, tail, x, u_ref, mass, resamples, rng):
    # bootstrap over paths of the solve on [t_step, T], evaluated at the node;
    # states outside a resample's hull measure extrapolation, not noise
    total = 0.0
    for _ in range(resamples):
        idx = rng.integers(0, tail.M, tail.M)
        sol_b = _restart_u(solution, tail.subset(idx))
        lo, hi = sol_b.hull(0)
        inside = np.all((x >= lo) & (x <= hi), axis=-1)
        total += _node_norm(np.where(inside, sol_b.u(0, x) - u_ref, 0.0), mass) ** 2
    return float(np.sqrt(total / resamples))


def flow_identity_report(solution: BsdeSolution, ensemble: PathEnsemble, step: int,
                         seed: Optional[int] = None, space: Optional[WeightedSpace] = None,
                         resamples: int = 16, noise_seed: int = 0) -> FlowReport:
    """:func:`flow_identity_check` plus bootstrap noise of both node estimates."""
    restarted, x, u_orig, u_rest, mass = _restart_pair(solution, ensemble, step, seed, space)
    rng = np.random.Generator(np.random.Philox(noise_seed))
    n_orig = _node_noise(solution, _tail(ensemble, step), x, u_orig, mass, resamples, rng)
    n_rest = _node_noise(solution, restarted, x, u_rest, mass, resamples, rng)
    return FlowReport(_node_norm(u_rest - u_orig, mass), n_orig, n_rest)


def z_gradient_consistency(solution: BsdeSolution, fd: FdSolution, space: WeightedSpace) -> float:
    """Root-mean-square in time of ||z_bsde(t_i) - sigma du/dx(t_i)||_{L^2_rho}, i < N.

    Only grid nodes inside both the FD domain and the path hull of step i count.
    """
    if space.d != 1:
        raise ValueError("z_gradient_consistency needs d = 1")
    grid = solution.grid
    times = grid.times
    total = 0.0
    for i in range(grid.N_steps):
        zf = z_field(solution, space, i)
        mask = _overlap(space, fd, zf)
        if not mask.any():
            raise ValueError(f"empty overlap region at step {i}")
        ref = fd.at(times[i], space.axis, what="sigma_grad_u")
        total += np.sum(space.measure * mask * (zf.values[:, 0] - ref) ** 2)
    return float(np.sqrt(total / grid.N_steps))


@dataclass
class CheckResult:
    check: str
    value: float
    tolerance: float
    noise_floor: float = float("nan")
    lower: Optional[float] = None  # two-sided checks pass inside [lower, tolerance]

    @property
    def passed(self) -> bool:
        ok = np.isfinite(self.value) and self.value <= self.tolerance
        return bool(ok and (self.lower is None or self.value >= self.lower))

    @property
    def tolerance_text(self) -> str:
        if self.lower is None:
            return f"{self.tolerance:.17g}"
        return f"{self.lower:.17g}:{self.tolerance:.17g}"


def write_verification_csv(results, path) -> None:
    """Rows of check, value, tolerance (``lo:hi`` when two-sided), passed, noise_floor."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "value", "tolerance", "passed", "noise_floor"])
        for r in results:
            w.writerow([r.check, f"{r.value:.17g}", r.tolerance_text,
                        "true" if r.passed else "false", f"{r.noise_floor:.17g}"])
