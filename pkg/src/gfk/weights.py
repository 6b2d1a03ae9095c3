"""Polynomial weight rho(x) = (1 + |x|)^q, weighted L^{2p} norms and quadrature.

Every spatial integral in the package goes through a :class:`WeightedSpace`,
so comparisons between solvers never mix quadrature rules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import special

__all__ = [
    "WeightedSpace",
    "WeightedField",
    "rho",
    "rho_inv",
    "rho_inv_gradient_bound_check",
    "weighted_lp_norm",
    "sample_from_weight_density",
    "weight_mass",
]


@dataclass(frozen=True)
class WeightedSpace:
    """Weight exponent, dimension and the tensor trapezoid grid on [-L, L]^d."""

    d: int = 1
    q: float = 2.0
    L_domain: float = 20.0
    n_quad: int = 2001

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.q > self.d:
            raise ValueError(f"q must exceed d (q={self.q}, d={self.d})")
        if not self.L_domain > 0:
            raise ValueError("L_domain must be positive")
        if self.n_quad < 2:
            raise ValueError("n_quad must be at least 2")

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L_domain, self.L_domain, self.n_quad)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return (self.axis,) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_quad,) * self.d

    @cached_property
    def points(self) -> np.ndarray:
        """Grid nodes as an array of shape ``shape + (d,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights, shape ``shape``."""
        h = self.axis[1] - self.axis[0]
        w1 = np.full(self.n_quad, h)
        w1[[0, -1]] = h / 2
        w = w1
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, w1)
        return w

    @cached_property
    def rho_inv(self) -> np.ndarray:
        return rho_inv(self, self.points)

    @cached_property
    def measure(self) -> np.ndarray:
        """Quadrature weights times rho^{-1}: the discrete version of rho^{-1}(x) dx."""
        return self.weights * self.rho_inv

    @property
    def mass(self) -> float:
        """Exact value of the integral of rho^{-1} over R^d."""
        return weight_mass(self.d, self.q)

    def integrate(self, values: np.ndarray) -> float:
        """Integral of ``values * rho^{-1}`` over the grid."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ValueError(f"expected values of shape {self.shape}, got {values.shape}")
        return float(np.sum(values * self.measure))

    def field(self, values) -> "WeightedField":
        return WeightedField(self.axes, np.asarray(values, dtype=float))

    def evaluate(self, fn) -> "WeightedField":
        """Tabulate ``fn``, which maps an (n, d) array of points to n values (or (n, k))."""
        values = np.asarray(fn(self.points.reshape(-1, self.d)), dtype=float)
        return self.field(values.reshape(self.shape + values.shape[1:]))

    def with_domain(self, L_domain: float) -> "WeightedSpace":
        """Same spacing on a larger or smaller box."""
        h = self.axis[1] - self.axis[0]
        n = int(round(2 * L_domain / h)) + 1
        return WeightedSpace(self.d, self.q, L_domain, n)


@dataclass(frozen=True)
class WeightedField:
    """Values of a scalar (or d-vector) function on a tensor grid."""

    axes: tuple
    values: np.ndarray = field(repr=False)
    # nodes where the values are extrapolated rather than supported by data
    extrapolated: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        for a in axes:
            if a.ndim != 1 or np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        lead = tuple(len(a) for a in axes)
        if values.shape[: len(lead)] != lead:
            raise ValueError(f"values shape {values.shape} does not match grid {lead}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return len(self.axes)

    def __mul__(self, c: float) -> "WeightedField":
        return WeightedField(self.axes, c * self.values, self.extrapolated)

    __rmul__ = __mul__

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Multilinear interpolation, constant outside the grid box.

        ``x`` has shape ``(..., d)``.
        """
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return np.interp(x[..., 0], self.axes[0], self.values)
        from scipy.interpolate import RegularGridInterpolator

        clipped = np.stack(
            [np.clip(x[..., k], a[0], a[-1]) for k, a in enumerate(self.axes)], axis=-1
        )
        return RegularGridInterpolator(self.axes, self.values)(clipped)


def rho(space: WeightedSpace, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if space.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        r = np.abs(x)
    else:
        r = np.linalg.norm(x, axis=-1)
    return (1.0 + r) ** space.q


def rho_inv(space: WeightedSpace, x) -> np.ndarray:
    return 1.0 / rho(space, x)


def weight_mass(d: int, q: float) -> float:
    """Closed form of the integral of (1 + |x|)^{-q} over R^d, finite iff q > d.

    In polar coordinates the radial integral is a Beta function B(d, q - d).
    """
    if not q > d:
        return float("inf")
    sphere = 2.0 * np.pi ** (d / 2) / special.gamma(d / 2)
    return float(sphere * special.beta(d, q - d))


def rho_inv_gradient_bound_check(space: WeightedSpace, sample_points, tol: float = 1e-6) -> bool:
    """Check |d rho^{-1}/dx_i| <= q rho^{-1}(x) by central differences."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if space.d == 1 and pts.shape[-1] != 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[-1] != space.d:
        raise ValueError(f"points must have {space.d} coordinates")
    norms = np.linalg.norm(pts, axis=-1)
    if np.any(norms <= 1e-8):
        raise ValueError("sample points must stay away from the origin (|x| > 1e-8)")
    base = rho_inv(space, pts)
    for i in range(space.d):
        # step well below |x| so the kink at the origin is never straddled
        h = np.minimum(1e-6 * (1.0 + norms), 0.5 * norms)
        e = np.zeros(space.d)
        e[i] = 1.0
        fwd = rho_inv(space, pts + h[:, None] * e)
        bwd = rho_inv(space, pts - h[:, None] * e)
        deriv = (fwd - bwd) / (2 * h)
        if np.any(np.abs(deriv) > space.q * base * (1 + tol)):
            return False
    return True


def weighted_lp_norm(space: WeightedSpace, field: WeightedField, two_p: int) -> float:
    """(sum |v|^{2p} rho^{-1} w)^{1/2p} over the space's grid."""
    if int(two_p) != two_p or two_p < 2 or two_p % 2:
        raise ValueError(f"two_p must be an even integer >= 2, got {two_p}")
    _check_on_grid(space, field)
    v = field.values
    mag = np.abs(v) if v.ndim == space.d else np.linalg.norm(v, axis=-1)
    scale = mag.max(initial=0.0)
    if scale == 0.0:
        return 0.0
    # factor out the max so |v|^{2p} cannot overflow
    total = space.integrate((mag / scale) ** two_p)
    return float(scale * total ** (1.0 / two_p))


def _check_on_grid(space: WeightedSpace, field: WeightedField) -> None:
    if field.d != space.d or any(
        len(a) != space.n_quad or not np.allclose(a, space.axis, rtol=0, atol=1e-12)
        for a in field.axes
    ):
        raise ValueError("field is not defined on this space's quadrature grid")


def sample_from_weight_density(space: WeightedSpace, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` points with density rho^{-1} / mass, shape ``(count, d)``.

    The radius R satisfies R / (1 + R) ~ Beta(d, q - d), which gives an exact
    inverse-CDF sampler in every dimension; d = 1 reduces to a closed form.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    d, q = space.d, space.q
    if d == 1:
        u = rng.random(count)
        # P(|X| > r) = (1 + r)^{1-q}; one uniform picks both sign and radius
        tail = np.where(u < 0.5, 2 * u, 2 * (1 - u))
        tail = np.maximum(tail, np.finfo(float).tiny)
        r = tail ** (-1.0 / (q - 1)) - 1.0
        return np.where(u < 0.5, -r, r)[:, None]
    t = special.betaincinv(d, q - d, rng.random(count))
    t = np.minimum(t, 1 - 1e-16)
    r = t / (1 - t)
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return r[:, None] * g
