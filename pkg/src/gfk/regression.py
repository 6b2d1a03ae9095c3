"""Least-squares conditional-expectation estimators on per-step bases.

``piecewise-linear-bins`` (d = 1): continuous hat functions on knots at the
path quantiles. The Gram matrix is tridiagonal and assembled with
``np.bincount``. ``global-polynomial``: monomials of total degree <= size in
robustly rescaled coordinates. Both extrapolate as constants outside the
box spanned by the fitting points.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy import linalg

__all__ = ["RegressionBasis", "HatFit", "PolyFit", "RIDGE"]

RIDGE = 1e-10
KINDS = ("piecewise-linear-bins", "global-polynomial")


@dataclass(frozen=True)
class RegressionBasis:
    kind: str = "piecewise-linear-bins"
    size: int = 32  # bins for the hat basis, total degree for polynomials

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; choose from {KINDS}")
        if self.size < (1 if self.kind == "piecewise-linear-bins" else 0):
            raise ValueError("basis size too small")

    @classmethod
    def default(cls, d: int) -> "RegressionBasis":
        return cls("piecewise-linear-bins", 32) if d == 1 else cls("global-polynomial", 3)

    def fit(self, x: np.ndarray):
        """Build the step basis from the states ``x`` of shape (M, d)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "piecewise-linear-bins":
            if x.shape[1] != 1:
                raise ValueError("piecewise-linear bins need d = 1; use global-polynomial")
            return HatFit(x[:, 0], self.size)
        return PolyFit(x, self.size)


class HatFit:
    """Hat-function basis on quantile knots, fitted to one step's states."""

    def __init__(self, x: np.ndarray, n_bins: int):
        self.M = len(x)
        knots = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
        scale = 1e-12 * (1.0 + np.abs(knots))
        keep = np.concatenate([[True], np.diff(knots) > scale[1:]])
        knots = knots[keep]
        self.merged = 0
        while True:
            j, w = self._locate(x, knots)
            if len(knots) < 2:
                break
            counts = np.bincount(j, minlength=len(knots) - 1)
            empty = np.flatnonzero(counts == 0)
            if not len(empty):
                break
            # merge the empty bin with a neighbour by dropping an interior knot
            e = empty[0]
            knots = np.delete(knots, e + 1 if e + 1 < len(knots) - 1 else e)
            self.merged += 1
        self.knots = knots
        self._j, self._w = j, w
        self.degenerate = self.merged > 0 or len(knots) < n_bins + 1
        self._factor = None

    @staticmethod
    def _locate(x, knots):
        if len(knots) < 2:
            return np.zeros(len(x), dtype=np.intp), np.zeros(len(x))
        j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(knots) - 2)
        w = (x - knots[j]) / (knots[j + 1] - knots[j])
        return j, np.clip(w, 0.0, 1.0)

    @property
    def n_functions(self) -> int:
        return len(self.knots)

    @property
    def hull(self):
        return np.array([self.knots[0]]), np.array([self.knots[-1]])

    def _gram(self):
        if self._factor is not None:
            return self._factor
        K = self.n_functions
        if K == 1:
            self._factor = ("scalar", float(self.M))
            return self._factor
        j, w = self._j, self._w
        lo, hi = 1.0 - w, w
        diag = np.bincount(j, lo * lo, K) + np.bincount(j + 1, hi * hi, K)
        off = np.bincount(j, lo * hi, K - 1)
        ab = np.zeros((2, K))
        ab[0, 1:] = off
        ab[1] = diag
        try:
            self._factor = ("banded", linalg.cholesky_banded(ab))
        except linalg.LinAlgError:
            ab[1] += RIDGE * diag.max()
            self._factor = ("banded", linalg.cholesky_banded(ab))
            self.degenerate = True
        return self._factor

    def solve(self, targets: np.ndarray) -> np.ndarray:
        """Least-squares coefficients, one column per target column."""
        targets = np.asarray(targets, dtype=float)
        flat = targets.reshape(self.M, -1)
        kind, fac = self._gram()
        if kind == "scalar":
            coef = flat.sum(axis=0, keepdims=True) / fac
        else:
            K = self.n_functions
            j, w = self._j, self._w
            rhs = np.empty((K, flat.shape[1]))
            for c in range(flat.shape[1]):
                t = flat[:, c]
                rhs[:, c] = np.bincount(j, (1.0 - w) * t, K) + np.bincount(j + 1, w * t, K)
            coef = linalg.cho_solve_banded((fac, False), rhs)
        return coef.reshape((self.n_functions,) + targets.shape[1:])

    def fitted(self, coef: np.ndarray) -> np.ndarray:
        """Regression function evaluated at the fitting points."""
        if self.n_functions == 1:
            return np.broadcast_to(coef[0], (self.M,) + coef.shape[1:]).copy()
        j, w = self._j, self._w
        w = w.reshape((-1,) + (1,) * (coef.ndim - 1))
        return (1.0 - w) * coef[j] + w * coef[j + 1]

    def __call__(self, coef: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Evaluate at new points ``x`` of shape (n, 1); constant outside the hull."""
        x = np.asarray(x, dtype=float)[..., 0]
        if self.n_functions == 1:
            return np.broadcast_to(coef[0], x.shape + coef.shape[1:]).copy()
        if coef.ndim == 1:
            return np.interp(x, self.knots, coef)
        cols = [np.interp(x, self.knots, coef[:, c]) for c in range(coef.shape[1])]
        return np.stack(cols, axis=-1)

    def release(self):
        """Drop per-path arrays once the step is done; evaluation still works."""
        self._j = self._w = None
        self._factor = None


class PolyFit:
    """Monomials of total degree <= ``degree`` in rescaled coordinates."""

    def __init__(self, x: np.ndarray, degree: int):
        self.M, self.d = x.shape
        self.degree = degree
        self.lo = x.min(axis=0)
        self.hi = x.max(axis=0)
        self.center = np.median(x, axis=0)
        q75, q25 = np.percentile(x, [75, 25], axis=0)
        spread = (q75 - q25) / 1.349
        self.scale = np.where(spread > 0, spread, 1.0)
        self.terms = [()] + [
            c for k in range(1, degree + 1) for c in combinations_with_replacement(range(self.d), k)
        ]
        self._A = self._design(x)
        self.degenerate = False
        self._factor = None
        self.merged = 0

    @property
    def n_functions(self) -> int:
        return len(self.terms)

    @property
    def hull(self):
        return self.lo, self.hi

    def _design(self, x):
        u = (np.clip(x, self.lo, self.hi) - self.center) / self.scale
        cols = [np.ones(len(x))]
        for term in self.terms[1:]:
            cols.append(np.prod(u[:, list(term)], axis=1))
        return np.stack(cols, axis=1)

    def _gram(self):
        if self._factor is None:
            G = self._A.T @ self._A
            try:
                self._factor = linalg.cho_factor(G)
            except linalg.LinAlgError:
                G = G + RIDGE * np.trace(G) / len(G) * np.eye(len(G))
                self._factor = linalg.cho_factor(G)
                self.degenerate = True
            if np.linalg.cond(G) > 1e12:
                self.degenerate = True
        return self._factor

    def solve(self, targets: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        flat = targets.reshape(self.M, -1)
        coef = linalg.cho_solve(self._gram(), self._A.T @ flat)
        return coef.reshape((self.n_functions,) + targets.shape[1:])

    def fitted(self, coef: np.ndarray) -> np.ndarray:
        return np.tensordot(self._A, coef, axes=(1, 0))

    def __call__(self, coef: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.tensordot(self._design(np.asarray(x, dtype=float)), coef, axes=(1, 0))

    def release(self):
        self._A = None
        self._factor = None
