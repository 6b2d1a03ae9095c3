"""Euler-Maruyama simulation of dX = b(X) ds + sigma(X) dW on a uniform grid.

Brownian increments come from counter-based Philox streams addressed by
(key, path block, step). Paths are processed in fixed blocks of
``BLOCK`` paths, so the output does not depend on how many workers run
the blocks.
"""
from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficients import CoefficientSet

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "simulate_forward",
    "terminal_states",
    "resimulate_from",
    "dump_ensemble",
    "load_ensemble",
    "worker_count",
    "BLOCK",
]

BLOCK = 4096
WORKERS_ENV = "GFK_WORKERS"
_MAGIC = b"GFKPATH1"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TimeGrid:
    t: float
    T: float
    N_steps: int

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("start time must be >= 0")
        if self.N_steps < 0 or int(self.N_steps) != self.N_steps:
            raise ValueError("N_steps must be a non-negative integer")
        if self.N_steps == 0:
            # degenerate grid of a restart at the terminal node
            if self.t != self.T:
                raise ValueError("a zero-step grid needs t == T")
        elif not self.t < self.T:
            raise ValueError("need t < T")

    @property
    def dt(self) -> float:
        return (self.T - self.t) / self.N_steps if self.N_steps else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t, self.T, self.N_steps + 1)

    def tail(self, step: int) -> "TimeGrid":
        """The grid from node ``step`` to T, sharing this grid's nodes."""
        return TimeGrid(float(self.times[step]), self.T, self.N_steps - step)


@dataclass(frozen=True)
class PathEnsemble:
    grid: TimeGrid
    x0: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)  # (M, N + 1, d)
    dW: np.ndarray = field(repr=False)  # (M, N, d)
    seed: int = 0
    coeffs: Optional[CoefficientSet] = field(default=None, repr=False, compare=False)

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    def subset(self, index: np.ndarray) -> "PathEnsemble":
        """Paths selected (with repetition allowed) by ``index``."""
        return PathEnsemble(self.grid, self.x0[index], self.X[index], self.dW[index],
                            self.seed, self.coeffs)


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def _increments(key, block: int, steps: range, size: int, d: int, sqdt: float) -> np.ndarray:
    out = np.empty((size, len(steps), d))
    for j, i in enumerate(steps):
        counter = np.array([0, 0, block, i], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
        out[:, j, :] = gen.standard_normal((size, d))
    return out * sqdt


def _euler_block(coeffs, x0, dW, dt, offset, keep_path=True):
    size, n, d = dW.shape
    xs = np.empty((size, n + 1, d)) if keep_path else None
    x = np.array(x0, dtype=float)
    if keep_path:
        xs[:, 0] = x
    for i in range(n):
        sig = coeffs.sigma(x)
        x = x + coeffs.b(x) * dt + np.einsum("mij,mj->mi", sig, dW[:, i])
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            k = offset + int(np.flatnonzero(bad)[0])
            raise FloatingPointError(f"non-finite state on path {k} at step {i + 1}")
        if keep_path:
            xs[:, i + 1] = x
    return xs if keep_path else x


def _blocks(M):
    return [(b, b * BLOCK, min(M, (b + 1) * BLOCK)) for b in range((M + BLOCK - 1) // BLOCK)]


def _check_x0(x0, d):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None] if d == 1 else x0[None, :]
    if x0.ndim != 2 or x0.shape[1] != d or x0.shape[0] == 0:
        raise ValueError(f"x0 must be a non-empty (M, {d}) array")
    return x0


def simulate_forward(coeffs: CoefficientSet, x0, grid: TimeGrid, seed: int,
                     workers: Optional[int] = None, step_offset: int = 0) -> PathEnsemble:
    """Euler-Maruyama paths started from ``x0`` at ``grid.t``.

    ``step_offset`` shifts the counter of the noise streams; it lets a restart
    at node k of a longer grid address its own steps.
    """
    x0 = _check_x0(x0, coeffs.d)
    M, d, N = x0.shape[0], coeffs.d, grid.N_steps
    # time-major storage so that the per-step slices X[:, i] are contiguous
    X = np.empty((N + 1, M, d)).transpose(1, 0, 2)
    dW = np.empty((N, M, d)).transpose(1, 0, 2)
    key = _key(seed)
    sqdt = np.sqrt(grid.dt)
    steps = range(step_offset, step_offset + N)

    def run(block):
        b, lo, hi = block
        inc = _increments(key, b, steps, hi - lo, d, sqdt)
        dW[lo:hi] = inc
        X[lo:hi] = _euler_block(coeffs, x0[lo:hi], inc, grid.dt, lo)

    _map(run, _blocks(M), workers)
    return PathEnsemble(grid, x0, X, dW, int(seed), coeffs)


def terminal_states(coeffs: CoefficientSet, x0, grid: TimeGrid, seed: int,
                    workers: Optional[int] = None) -> np.ndarray:
    """X_T only, computed block by block without storing paths.

    Uses the same noise streams as :func:`simulate_forward`, so the result
    equals ``simulate_forward(...).X[:, -1]``.
    """
    x0 = _check_x0(x0, coeffs.d)
    M, d = x0.shape
    out = np.empty_like(x0)
    key = _key(seed)
    sqdt = np.sqrt(grid.dt)

    def run(block):
        b, lo, hi = block
        inc = _increments(key, b, range(grid.N_steps), hi - lo, d, sqdt)
        out[lo:hi] = _euler_block(coeffs, x0[lo:hi], inc, grid.dt, lo, keep_path=False)

    _map(run, _blocks(M), workers)
    return out


def _map(fn, items, workers):
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        for it in items:
            fn(it)
        return
    with ThreadPoolExecutor(workers) as pool:
        # list() re-raises the first worker exception
        list(pool.map(fn, items))


def restart_seed(seed: int, step: int) -> int:
    """Seed of the fresh noise used by a restart at ``step``; step 0 keeps the seed."""
    if step == 0:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), int(step), 0x5EED]).generate_state(1, np.uint64)[0])


def resimulate_from(ensemble: PathEnsemble, step: int, seed: Optional[int] = None,
                    workers: Optional[int] = None) -> PathEnsemble:
    """New paths from the states at node ``step`` to T with fresh increments."""
    N = ensemble.grid.N_steps
    if not 0 <= step <= N:
        raise ValueError(f"step must lie in [0, {N}], got {step}")
    if ensemble.coeffs is None:
        raise ValueError("ensemble carries no coefficients to resimulate with")
    seed = restart_seed(ensemble.seed, step) if seed is None else seed
    grid = ensemble.grid.tail(step)
    start = ensemble.X[:, step]
    if grid.N_steps == 0:
        return PathEnsemble(grid, start.copy(), start[:, None].copy(),
                            np.empty((ensemble.M, 0, ensemble.d)), int(seed), ensemble.coeffs)
    # the counter offset keeps a step-0 restart identical to the original
    return simulate_forward(ensemble.coeffs, start, grid, seed, workers, step_offset=step)


def dump_ensemble(ensemble: PathEnsemble, path) -> None:
    """Binary dump: magic, int64 M N d seed, float64 t T, then x0, X, dW (little-endian)."""
    g = ensemble.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqqQ", ensemble.M, g.N_steps, ensemble.d, ensemble.seed))
        fh.write(struct.pack("<dd", g.t, g.T))
        for arr in (ensemble.x0, ensemble.X, ensemble.dW):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_ensemble(path, coeffs: Optional[CoefficientSet] = None) -> PathEnsemble:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not an ensemble dump")
        M, N, d, seed = struct.unpack("<qqqQ", fh.read(32))
        t, T = struct.unpack("<dd", fh.read(16))
        x0 = np.frombuffer(fh.read(8 * M * d), "<f8").reshape(M, d)
        X = np.frombuffer(fh.read(8 * M * (N + 1) * d), "<f8").reshape(M, N + 1, d)
        dW = np.frombuffer(fh.read(8 * M * N * d), "<f8").reshape(M, N, d)
    return PathEnsemble(TimeGrid(t, T, N), x0.astype(float), X.astype(float),
                        dW.astype(float), seed, coeffs)
