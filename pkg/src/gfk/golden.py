"""Committed high-precision reference for the equivalence-of-norms ratio."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .pde import bump
from .scenarios import get_scenario
from .sde import TimeGrid
from .verification import norm_equivalence_check
from .weights import WeightedSpace

# Brownian motion from t = 0 to T = 1; a single Euler step is exact in law
GOLDEN_SETUP = {
    "scenario": "heat",
    "d": 1,
    "q": 2.0,
    "L_domain": 20.0,
    "n_quad": 2001,
    "t": 0.0,
    "T": 1.0,
    "N_steps": 1,
    "bump_center": 0.0,
    "bump_radius": 1.0,
}


def sandwich_inputs(setup=GOLDEN_SETUP):
    space = WeightedSpace(setup["d"], setup["q"], setup["L_domain"], setup["n_quad"])
    b = bump(setup["bump_center"], setup["bump_radius"])
    phi = space.field(b.value(space.axis))
    grid = TimeGrid(setup["t"], setup["T"], setup["N_steps"])
    return get_scenario(setup["scenario"], setup["d"]).coeffs, space, phi, grid


def run_sandwich(M: int, seed: int, setup=GOLDEN_SETUP, workers=None):
    coeffs, space, phi, grid = sandwich_inputs(setup)
    return norm_equivalence_check(coeffs, space, phi, grid, M, seed, workers=workers)


def load_golden() -> dict:
    text = resources.files("gfk").joinpath("data/golden.json").read_text()
    return json.loads(text)


def golden_band(golden=None):
    g = golden or load_golden()
    r, w = g["ratio"], g["band_half_width"]
    return float(r * (1 - w)), float(r * (1 + w))


def quadrature_middle(setup=GOLDEN_SETUP) -> float:
    """Middle term by direct quadrature: sum_j w_j rho^{-1}(x_j) (phi * N(0, T - t))(x_j).

    Independent of the Monte Carlo path: the Gaussian convolution of the
    interpolated bump is integrated with Gauss-Hermite nodes.
    """
    _, space, phi, _ = sandwich_inputs(setup)
    var = setup["T"] - setup["t"]
    g, gw = np.polynomial.hermite_e.hermegauss(201)
    gw = gw / gw.sum()
    conv = np.zeros(space.n_quad)
    for node, weight in zip(g, gw):
        conv += weight * phi(space.axis[:, None] + np.sqrt(var) * node)
    return float(np.sum(space.measure * conv))
