import numpy as np
import pytest
from scipy import stats

from gfk.coefficients import CoefficientSet
from gfk.scenarios import get_scenario
from gfk.sde import (BLOCK, TimeGrid, dump_ensemble, load_ensemble, resimulate_from,
                     restart_seed, simulate_forward, terminal_states)

from conftest import constant_coeffs


def test_time_grid():
    g = TimeGrid(0.0, 1.0, 4)
    assert g.dt == 0.25
    assert np.allclose(g.times, [0, 0.25, 0.5, 0.75, 1])
    tail = g.tail(3)
    assert tail.N_steps == 1 and tail.t == 0.75
    assert g.tail(4).N_steps == 0
    for bad in ((1.0, 1.0, 3), (-0.1, 1.0, 3), (0.0, 1.0, -1), (0.5, 0.2, 2)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_frozen_dynamics():
    ens = simulate_forward(constant_coeffs(0.0, 0.0), np.linspace(-2, 2, 5), TimeGrid(0, 1, 10), 3)
    assert np.array_equal(ens.X, np.broadcast_to(ens.x0[:, None, :], ens.X.shape))


def test_pure_drift_is_exact():
    ens = simulate_forward(constant_coeffs(1.0, 0.0), np.zeros(3), TimeGrid(0, 1, 64), 0)
    assert np.allclose(ens.X[:, -1, 0], 1.0, atol=1e-12)
    assert np.allclose(ens.X[0, :, 0], np.linspace(0, 1, 65), atol=1e-12)


def test_brownian_moments():
    M = 200_000
    ens = simulate_forward(constant_coeffs(), np.zeros(M), TimeGrid(0, 1, 4), 11)
    xT = ens.X[:, -1, 0]
    se = 1 / np.sqrt(M)
    assert abs(xT.mean()) < 4 * se
    assert abs(xT.var() - 1.0) < 4 * np.sqrt(2) * se
    assert stats.kstest(xT, "norm").pvalue > 1e-3


def test_increments_match_paths():
    c = constant_coeffs(0.3, 0.7)
    ens = simulate_forward(c, np.random.default_rng(0).normal(size=50), TimeGrid(0, 2, 8), 5)
    step = np.diff(ens.X, axis=1)
    assert np.allclose(step, 0.3 * ens.grid.dt + 0.7 * ens.dW, atol=1e-13)
    assert ens.X.shape == (50, 9, 1) and ens.dW.shape == (50, 8, 1)


@pytest.mark.parametrize("workers", [2, 5])
def test_output_independent_of_workers(workers):
    c = get_scenario("ginzburg-landau").coeffs
    x0 = np.linspace(-3, 3, 2 * BLOCK + 17)
    g = TimeGrid(0, 1, 6)
    a = simulate_forward(c, x0, g, 42, workers=1)
    b = simulate_forward(c, x0, g, 42, workers=workers)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.dW, b.dW)
    assert np.array_equal(terminal_states(c, x0, g, 42, workers=workers), a.X[:, -1])


def test_seed_changes_noise():
    c = constant_coeffs()
    g = TimeGrid(0, 1, 3)
    a = simulate_forward(c, np.zeros(10), g, 1)
    b = simulate_forward(c, np.zeros(10), g, 2)
    assert not np.array_equal(a.dW, b.dW)


def test_prefix_stability():
    # the first paths do not depend on how many follow
    c = constant_coeffs()
    g = TimeGrid(0, 1, 3)
    a = simulate_forward(c, np.zeros(100), g, 9)
    b = simulate_forward(c, np.zeros(BLOCK + 100), g, 9)
    assert np.array_equal(a.X, b.X[:100])


def test_non_finite_reports_path():
    def drift(x):
        return np.where(x > 0.5, np.inf, 0.0)

    c = CoefficientSet(1, drift, constant_coeffs(s=0.0).sigma, 1.0)
    x0 = np.zeros(10)
    x0[7] = 1.0
    with pytest.raises(FloatingPointError, match="path 7 at step 1"):
        simulate_forward(c, x0, TimeGrid(0, 1, 2), 0)


def test_bad_start_shape():
    with pytest.raises(ValueError):
        simulate_forward(constant_coeffs(d=2), np.zeros((4, 3)), TimeGrid(0, 1, 2), 0)
    with pytest.raises(ValueError):
        simulate_forward(constant_coeffs(), np.zeros(0), TimeGrid(0, 1, 2), 0)


def test_resimulate_step_zero_is_identity():
    c = get_scenario("ou-linear").coeffs
    ens = simulate_forward(c, np.linspace(-1, 1, 30), TimeGrid(0, 1, 10), 4)
    again = resimulate_from(ens, 0)
    assert np.array_equal(again.X, ens.X)
    assert restart_seed(4, 0) == 4


def test_resimulate_terminal_step():
    ens = simulate_forward(constant_coeffs(), np.zeros(20), TimeGrid(0, 1, 5), 4)
    end = resimulate_from(ens, 5)
    assert end.grid.N_steps == 0 and end.dW.shape == (20, 0, 1)
    assert np.array_equal(end.X[:, 0], ens.X[:, -1])
    with pytest.raises(ValueError):
        resimulate_from(ens, 6)


def test_resimulate_uses_fresh_noise_with_same_law():
    c = constant_coeffs()
    ens = simulate_forward(c, np.zeros(100_000), TimeGrid(0, 1, 10), 1)
    r = resimulate_from(ens, 4)
    assert r.grid.t == pytest.approx(0.4) and r.grid.N_steps == 6
    assert np.array_equal(r.X[:, 0], ens.X[:, 4])
    assert not np.array_equal(r.dW, ens.dW[:, 4:])
    # both X_T samples are N(0, 1)
    assert stats.ks_2samp(r.X[:, -1, 0], ens.X[:, -1, 0]).pvalue > 1e-3


def test_ou_weak_order_one():
    # dX = -X ds + dW, X_0 = 1: E[X_T^2] = e^{-2} + (1 - e^{-2})/2; Euler bias is O(dt)
    c = get_scenario("ou-linear").coeffs
    exact = np.exp(-2) + 0.5 * (1 - np.exp(-2))

    def discrete(N):
        # the Euler second moment, exactly: m_{k+1} = (1 - dt)^2 m_k + dt
        dt, m = 1.0 / N, 1.0
        for _ in range(N):
            m = (1 - dt) ** 2 * m + dt
        return m

    assert abs(discrete(20) - exact) / abs(discrete(40) - exact) == pytest.approx(2, rel=0.1)
    M = 400_000
    ens_x = terminal_states(c, np.ones(M), TimeGrid(0, 1, 20), 3)
    mc = np.mean(ens_x**2)
    assert abs(mc - discrete(20)) < 5 * np.std(ens_x**2) / np.sqrt(M)


def test_martingale_mean():
    c = get_scenario("ou-linear").coeffs  # odd drift, constant sigma: symmetric law
    xT = terminal_states(c, np.zeros(100_000), TimeGrid(0, 1, 20), 8)
    assert abs(xT.mean()) < 4 * xT.std() / np.sqrt(len(xT))


def test_dump_round_trip(tmp_path):
    c = constant_coeffs(d=2)
    ens = simulate_forward(c, np.random.default_rng(0).normal(size=(7, 2)), TimeGrid(0.5, 2, 3), 12)
    p = tmp_path / "paths.bin"
    dump_ensemble(ens, p)
    back = load_ensemble(p, c)
    assert back.grid == ens.grid and back.seed == 12
    for name in ("x0", "X", "dW"):
        assert np.array_equal(getattr(back, name), getattr(ens, name))
    (tmp_path / "junk.bin").write_bytes(b"nonsense" * 4)
    with pytest.raises(ValueError):
        load_ensemble(tmp_path / "junk.bin")


def test_subset():
    ens = simulate_forward(constant_coeffs(), np.arange(5.0), TimeGrid(0, 1, 2), 0)
    sub = ens.subset(np.array([4, 4, 0]))
    assert sub.M == 3 and np.array_equal(sub.X[0], ens.X[4])
