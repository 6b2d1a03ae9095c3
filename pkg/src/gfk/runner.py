"""Batch pipeline: config -> paths -> BSDE solve -> FD oracle -> checks -> CSV + manifest."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bsde import (apriori_moment_report, default_truncation, noise_floor,
                   representation_field, solve_bsde, truncation_sweep, untransform_bsde)
from .coefficients import exp_transform, truncate_driver, validate_conditions
from .config import RunConfig, as_dict, serialize
from .pde import FdGrid, bump, fd_solve, weak_form_residual, write_fd_csv
from .regression import RegressionBasis
from .scenarios import get_scenario
from .sde import WORKERS_ENV, TimeGrid, restart_seed, simulate_forward, worker_count
from .verification import (CheckResult, flow_identity_report, norm_equivalence_check,
                           relative_weighted_error, representation_error,
                           write_verification_csv, z_gradient_consistency)
from .weights import WeightedSpace, sample_from_weight_density

__all__ = ["StageError", "ExitReport", "run", "run_sweep", "git_blob_hash"]


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


@dataclass
class ExitReport:
    status: int
    results: list
    outputs: dict
    manifest: dict = field(repr=False)

    @property
    def failed(self) -> list:
        return [r.check for r in self.results if not r.passed]


def git_blob_hash(data: bytes) -> str:
    """Content hash as ``git hash-object`` computes it."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _fmt(v: float) -> str:
    return f"{v:.17g}"


class _Stages:
    """Runs named stages, timing each and tagging errors with the stage name."""

    def __init__(self):
        self.wall = {}

    def __call__(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.wall[name] = self.wall.get(name, 0.0) + time.perf_counter() - start


def _setup(cfg: RunConfig):
    sc = get_scenario(cfg.scenario, cfg.d)
    space = WeightedSpace(cfg.d, cfg.q, cfg.L_domain, cfg.n_quad)
    grid = TimeGrid(cfg.t, cfg.T, cfg.N_steps)
    if cfg.basis_kind == "auto":
        basis = RegressionBasis.default(cfg.d)
        if cfg.basis_size:
            basis = RegressionBasis(basis.kind, cfg.basis_size)
    else:
        default = 32 if cfg.basis_kind == "piecewise-linear-bins" else 3
        basis = RegressionBasis(cfg.basis_kind, cfg.basis_size or default)
    return sc, space, grid, basis


def _levels(cfg, sc, space, levels=None):
    sup_h = float(np.max(np.abs(space.evaluate(sc.driver.h).values)))
    raw = cfg.truncation if levels is None else levels
    out = [default_truncation(sup_h) if lv == "auto" else float(lv) for lv in raw]
    return out, sup_h


def _solve(cfg, sc, ens, basis, level):
    """Solve with f_n, optionally through the exponential transform."""
    driver = sc.driver
    if cfg.transform and driver.mu != 0:
        mu = driver.mu
        tilde = truncate_driver(exp_transform(driver, cfg.T), level * np.exp(abs(mu) * cfg.T))
        sol = solve_bsde(ens, tilde, basis, cfg.picard_iters, cfg.theta)
        return untransform_bsde(sol, mu)
    return solve_bsde(ens, truncate_driver(driver, level), basis, cfg.picard_iters, cfg.theta)


def _write_u_compare(path, cfg, space, u_field, fd):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if cfg.d == 1:
            w.writerow(["t", "x", "u_bsde", "u_fd", "abs_err"])
            x = space.axis
            keep = ~u_field.extrapolated
            u_fd = np.full_like(x, np.nan)
            if fd is not None:
                keep &= (x >= fd.x[0]) & (x <= fd.x[-1])
                u_fd = fd.at(cfg.t, x)
            for xi, ub, uf in zip(x[keep], u_field.values[keep], u_fd[keep]):
                w.writerow([_fmt(cfg.t), _fmt(xi), _fmt(ub), _fmt(uf), _fmt(abs(ub - uf))])
            return
        # d >= 2: no FD oracle; the line x = (s, 0, ..., 0) through the grid
        w.writerow(["t"] + [f"x{k + 1}" for k in range(cfg.d)] + ["u_bsde", "u_fd", "abs_err"])
        mid = space.n_quad // 2
        idx = (slice(None),) + (mid,) * (cfg.d - 1)
        pts = space.points[idx]
        vals = u_field.values[idx]
        ext = u_field.extrapolated[idx]
        for p, ub in zip(pts[~ext], vals[~ext]):
            w.writerow([_fmt(cfg.t)] + [_fmt(c) for c in p] + [_fmt(ub), "nan", "nan"])


def _fd_slices(fd, count):
    k = np.unique(np.round(np.linspace(0, len(fd.times) - 1, count)).astype(int))
    return [fd.times[i] for i in k]


def _run_checks(cfg, sc, space, grid, ens, sol, fd, u_field, stages, seeds):
    results = []
    floor = None

    def get_floor():
        nonlocal floor
        if floor is None and cfg.resamples > 0:
            seeds["noise"] = cfg.seed + 1
            floor = stages("noise_floor", noise_floor, sol, ens, space, cfg.resamples, cfg.seed + 1)
        return floor

    for check in cfg.checks:
        if check == "validate_conditions":
            rep = stages(check, validate_conditions, sc.coeffs, sc.driver, space,
                         seed=cfg.seed, T=cfg.T)
            seeds["validate"] = cfg.seed
            # a flagged scenario must fail exactly its declared hypotheses
            mismatch = set(rep.failed) ^ set(sc.violates)
            results.append(CheckResult(check, float(len(mismatch)), 0.0))
        elif check == "closed_form":
            if sc.exact is None:
                raise StageError(check, ValueError(f"scenario {sc.name} has no closed form"))
            pts = space.points.reshape(-1, cfg.d)
            exact = sc.exact(cfg.t, pts, cfg.T).reshape(space.shape)
            err = relative_weighted_error(space, u_field.values, exact, ~u_field.extrapolated)
            results.append(CheckResult("closed_form_bsde", err, cfg.tol_closed_form))
            if fd is not None:
                fd_err = float(np.max(np.abs(fd.at(cfg.t) - sc.exact(cfg.t, fd.x[:, None], cfg.T))))
                results.append(CheckResult("closed_form_fd", fd_err, cfg.tol_fd_max))
        elif check == "representation_error":
            _need_fd(check, fd)
            err = stages(check, representation_error, u_field, fd, space, cfg.t)
            nf = get_floor()
            rel = float("nan")
            if nf is not None:
                ref = np.sqrt(space.integrate(fd.at(cfg.t, space.axis) ** 2))
                rel = nf.u0 / max(ref, 1e-12)
            results.append(CheckResult(check, err, cfg.tol_representation, rel))
        elif check == "z_gradient_consistency":
            _need_fd(check, fd)
            dist = stages(check, z_gradient_consistency, sol, fd, space)
            nf = get_floor()
            results.append(CheckResult(check, dist, cfg.tol_z_gradient,
                                       nf.Z if nf is not None else float("nan")))
        elif check == "flow_identity":
            step = cfg.flow_step or cfg.N_steps // 2
            seeds["restart"] = restart_seed(cfg.seed, step)
            rep = stages(check, flow_identity_report, sol, ens, step, space=space,
                         resamples=max(cfg.resamples, 2), noise_seed=cfg.seed + 2)
            tol = cfg.noise_factor * rep.pooled_noise + cfg.noise_atol
            results.append(CheckResult(check, rep.discrepancy, tol, rep.pooled_noise))
        elif check == "norm_equivalence":
            phi = bump(0.0, 1.0)
            field_ = space.evaluate(lambda x: phi.value(x[:, 0])) if cfg.d == 1 else \
                space.evaluate(lambda x: phi.value(np.linalg.norm(x, axis=1)))
            seeds["sandwich"] = cfg.seed + 3
            rep = stages(check, norm_equivalence_check, sc.coeffs, space, field_, grid,
                         cfg.sandwich_M, cfg.seed + 3, cfg.sandwich_window)
            lo, hi = cfg.sandwich_window
            results.append(CheckResult(check, rep.ratio, hi, rep.std_error / rep.outer, lower=lo))
        elif check == "weak_form_residual":
            _need_fd(check, fd)
            r = stages(check, weak_form_residual, fd, sc.coeffs, _fd_driver(cfg, sc, space),
                       bump(0.0, 1.0), cfg.t)
            results.append(CheckResult(check, r, cfg.tol_weak_form))
        elif check == "apriori_bound":
            rep = stages(check, apriori_moment_report, sol, sol.driver, space, cfg.C_p,
                         cfg.resamples or 16, cfg.seed + 4)
            results.append(CheckResult(check, (rep.A + rep.B) / rep.R, 1.0,
                                       float(np.hypot(rep.A_noise, rep.B_noise) / rep.R)))
    return results


def _need_fd(check, fd):
    if fd is None:
        raise StageError(check, ValueError("needs the FD oracle (fd = true and d = 1)"))


def _fd_driver(cfg, sc, space):
    level, _ = _levels(cfg, sc, space)
    return truncate_driver(sc.driver, level[0])


def _write_manifest(out: Path, cfg, sc, stages, seeds, outputs, results, status, extra=None):
    manifest = {
        "version": __version__,
        "scenario": sc.name,
        "description": sc.description,
        "assumptions_violated": sc.assumptions_violated,
        "warnings": ([f"scenario {sc.name} violates {', '.join(sc.violates)}; "
                      "results are outside the theory's scope"] if sc.violates else []),
        "config": as_dict(cfg),
        "config_text": serialize(cfg),
        "config_hash": git_blob_hash(serialize(cfg).encode()),
        "seeds": seeds,
        "workers": worker_count(),
        "workers_env": WORKERS_ENV,
        "wall_seconds": {k: round(v, 3) for k, v in stages.wall.items()},
        "outputs": outputs,
        "checks": [{"check": r.check, "value": r.value, "tolerance": r.tolerance,
                    "lower": r.lower, "passed": r.passed, "noise_floor": r.noise_floor}
                   for r in results],
        "exit_status": status,
    }
    if extra:
        manifest.update(extra)
    text = json.dumps(_finite(manifest), indent=2, sort_keys=True, allow_nan=False,
                      default=_json_default)
    (out / "manifest.json").write_text(text + "\n")
    return manifest


def _finite(o):
    # strict JSON: non-finite floats become null
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, (float, np.floating)):
        return float(o) if np.isfinite(o) else None
    return o


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _hash_outputs(out, names):
    return {n: git_blob_hash((out / n).read_bytes()) for n in names}


def run(cfg: RunConfig, checks: Optional[tuple] = None) -> ExitReport:
    """Full pipeline; ``checks`` overrides the configured list (``()`` solves only)."""
    checks = cfg.checks if checks is None else tuple(checks)
    stages = _Stages()
    sc, space, grid, basis = stages("setup", _setup, cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    levels, sup_h = _levels(cfg, sc, space)
    seeds = {"mc": cfg.seed, "x0": cfg.seed}

    x0 = stages("sample", sample_from_weight_density, space, cfg.M, cfg.seed)
    ens = stages("simulate", simulate_forward, sc.coeffs, x0, grid, cfg.seed)
    sol = stages("solve", _solve, cfg, sc, ens, basis, levels[0])
    u_field = stages("represent", representation_field, sol, space, 0)

    fd = None
    names = ["u_compare.csv"]
    if cfg.fd and cfg.d == 1:
        fd_grid = FdGrid(cfg.L_fd, cfg.dx, cfg.dt_fd, cfg.t, cfg.T)
        fd = stages("fd_solve", fd_solve, sc.coeffs, truncate_driver(sc.driver, levels[0]), fd_grid)
        stages("write", write_fd_csv, fd, out / "fd_slices.csv", _fd_slices(fd, cfg.fd_slices))
        names.append("fd_slices.csv")
    stages("write", _write_u_compare, out / "u_compare.csv", cfg, space, u_field, fd)

    run_cfg = cfg if checks == cfg.checks else _with_checks(cfg, checks)
    results = _run_checks(run_cfg, sc, space, grid, ens, sol, fd, u_field, stages, seeds)
    if checks:
        stages("write", write_verification_csv, results, out / "verification.csv")
        names.append("verification.csv")
    status = 1 if any(not r.passed for r in results) else 0
    outputs = _hash_outputs(out, names)
    extra = {"truncation_level": levels[0], "sup_h": sup_h,
             "degenerate_steps": sol.diagnostics["degenerate_steps"].tolist()}
    if fd is not None:
        extra["fd_cfl"] = fd.diagnostics["cfl"]
    manifest = _write_manifest(out, cfg, sc, stages, seeds, outputs, results, status, extra)
    return ExitReport(status, results, outputs, manifest)


def _with_checks(cfg, checks):
    return dataclasses.replace(cfg, checks=tuple(checks))


def run_sweep(cfg: RunConfig, levels=None) -> ExitReport:
    """Truncation sweep on one shared ensemble with a-priori moment estimates per level."""
    stages = _Stages()
    sc, space, grid, basis = stages("setup", _setup, cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    levels, sup_h = _levels(cfg, sc, space, levels)
    levels = sorted(levels)
    seeds = {"mc": cfg.seed, "x0": cfg.seed, "moments": cfg.seed + 4}
    x0 = stages("sample", sample_from_weight_density, space, cfg.M, cfg.seed)
    ens = stages("simulate", simulate_forward, sc.coeffs, x0, grid, cfg.seed)
    sweep = stages("sweep", truncation_sweep, ens, sc.driver, basis, levels,
                   cfg.picard_iters, cfg.theta, space)
    reports = [stages("moments", apriori_moment_report, s, sc.driver, space, cfg.C_p,
                      cfg.resamples or 16, cfg.seed + 4) for _, s, _ in sweep]
    with open(out / "truncation_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "delta", "A", "B", "A_noise", "B_noise", "R", "within_bound"])
        for (n, _, delta), r in zip(sweep, reports):
            w.writerow([_fmt(n), _fmt(delta), _fmt(r.A), _fmt(r.B), _fmt(r.A_noise),
                        _fmt(r.B_noise), _fmt(r.R), "true" if r.within_bound else "false"])
    results = []
    for (n, _, _), r in zip(sweep, reports):
        results.append(CheckResult(f"apriori_bound[n={n:g}]", (r.A + r.B) / r.R, 1.0))
    # uniformity in n is only expected where the clamp never binds the solution
    inactive = [r for (n, _, _), r in zip(sweep, reports) if n >= sup_h]
    for name in ("A", "B"):
        if len(inactive) < 2:
            break
        vals = np.array([getattr(r, name) for r in inactive])
        noise = max(getattr(r, f"{name}_noise") for r in inactive)
        tol = cfg.noise_factor * noise + 1e-12 * max(1.0, float(np.abs(vals).max()))
        results.append(CheckResult(f"moment_spread_{name}", float(vals.max() - vals.min()),
                                   tol, noise))
    write_verification_csv(results, out / "verification.csv")
    status = 1 if any(not r.passed for r in results) else 0
    outputs = _hash_outputs(out, ["truncation_sweep.csv", "verification.csv"])
    manifest = _write_manifest(out, cfg, sc, stages, seeds, outputs, results, status,
                               {"levels": levels, "sup_h": sup_h})
    return ExitReport(status, results, outputs, manifest)
