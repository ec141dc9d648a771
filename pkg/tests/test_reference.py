import csv

import numpy as np
import pytest

from relaxrom.problems import (InitialCondition, burgers_flux, gauss_bump, linear_flux,
                               shifted_sine, sine, step)
from relaxrom.reference import (GridFunction, NoShockError, RiccatiBlowUp, RiccatiParams,
                                burgers_riemann_profile, cell_centers, error_norms,
                                exact_burgers_riemann, exact_linear_advection, exact_riccati,
                                fv_relaxation_solve, shock_position, shock_speed_estimate)


def test_linear_advection_examples():
    u0 = sine()
    x = cell_centers(64)
    np.testing.assert_allclose(exact_linear_advection(u0, 1.0, 0.0, 64).values, u0(x))
    np.testing.assert_allclose(exact_linear_advection(u0, 1.0, 2.0, 64).values, u0(x), atol=1e-14)
    np.testing.assert_allclose(exact_linear_advection(u0, 1.0, 1.0, 64).values,
                               -np.sin(np.pi * x), atol=1e-14)


def riccati(gamma=2.0, delta=1.0, lam=1.0):
    return RiccatiParams(gamma, delta, lam, gauss_bump())


def test_riccati_reduces_to_advection():
    p = riccati(0.0, 0.0, 1.3)
    x = np.linspace(-1, 1, 201)
    np.testing.assert_allclose(exact_riccati(p, 0.4, x), gauss_bump()(x - 0.52), atol=1e-15)


def test_riccati_delta_zero_limit():
    x = np.linspace(-0.3, 0.9, 50)
    a = exact_riccati(riccati(2.0, 0.0), 0.3, x)
    b = exact_riccati(riccati(2.0, 1e-9), 0.3, x)
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_riccati_pde_residual():
    p = riccati()
    rng = np.random.default_rng(0)
    h = 1e-4
    t = rng.uniform(0.05, 0.5, 100)
    # interior of the transported support, away from its edges
    x = t * p.lam + rng.uniform(-0.45, 0.45, 100)
    w = lambda tt, xx: np.array([exact_riccati(p, a, b) for a, b in zip(tt, xx)])  # noqa: E731
    wt = (w(t + h, x) - w(t - h, x)) / (2 * h)
    wx = (w(t, x + h) - w(t, x - h)) / (2 * h)
    res = wt + p.lam * wx - p.source(w(t, x))
    assert np.max(np.abs(res)) <= 1e-4


def test_riccati_reference_profile_shape():
    x = cell_centers(400)
    w = exact_riccati(riccati(), 0.5, x)
    assert w[np.argmax(w)] > gauss_bump()(0.0)  # source amplifies the bump
    assert x[np.argmax(w)] == pytest.approx(0.5, abs=0.01)
    assert np.all(w[np.abs(x - 0.5) > 0.5] == 0)


def test_riccati_blow_up_detected():
    p = RiccatiParams(2.0, 0.0, 1.0, InitialCondition(lambda x: np.where(abs(x) < 0.5, 1.0, 0.0)),
                      (-0.5, 0.5))
    with pytest.raises(RiccatiBlowUp) as info:
        exact_riccati(p, 0.5, np.array([0.5]))
    assert info.value.x == pytest.approx(0.5)


def test_riemann_initial_and_positions():
    x = cell_centers(200)
    np.testing.assert_array_equal(burgers_riemann_profile(1.0, 0.0, x), step(1.0)(x))
    # shock starts at the down-jump x = 1/2 and moves at -a/2
    g = exact_burgers_riemann(1.0, 0.4, 2000)
    assert shock_position(g, 0.5) == pytest.approx(0.3, abs=1e-3)
    g = exact_burgers_riemann(2.0, 0.2, 2000)
    assert shock_position(g, 0.5) == pytest.approx(0.3, abs=1e-3)
    # rarefaction fan u = x / t on [-a t, 0]
    assert burgers_riemann_profile(1.0, 0.4, -0.2) == pytest.approx(-0.5)


@pytest.mark.parametrize("a", [0.5, 1.0, 1.7])
def test_rankine_hugoniot(a):
    f = burgers_flux()
    s = -a / 2
    assert s * (0.0 - (-a)) == pytest.approx(f(0.0) - f(-a))


def test_riemann_validity_window():
    with pytest.raises(ValueError):
        burgers_riemann_profile(1.0, 1.01, 0.0)
    with pytest.raises(ValueError):
        burgers_riemann_profile(1.0, -0.1, 0.0)


def _gl(f, a, b, cuts, n=8, m=40):
    pts = np.unique(np.clip(np.concatenate([[a, b], np.asarray(cuts, float)]), a, b))
    xg, wg = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        edges = np.linspace(lo, hi, m + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        total += np.sum(half * wg * f(mid + half * xg))
    return total


def test_riemann_weak_form_balance():
    a = 1.0
    f = burgers_flux()
    rng = np.random.default_rng(1)
    for _ in range(20):
        t0, t1 = np.sort(rng.uniform(0.0, 1.0 / a, 2))
        x0, x1 = np.sort(rng.uniform(-0.9, 0.9, 2))
        u = lambda t, x: burgers_riemann_profile(a, t, x)  # noqa: E731

        def space(t):
            return _gl(lambda x: u(t, x), x0, x1, [0.0, -a * t, 0.5 - 0.5 * a * t])

        def edge(x):
            cuts = [-x / a, (0.5 - x) * 2 / a]
            ut = np.vectorize(lambda t: u(t, x))
            return _gl(lambda t: f(ut(t)), t0, t1, cuts)

        balance = space(t1) - space(t0) + edge(x1) - edge(x0)
        assert abs(balance) <= 1e-6


@pytest.mark.parametrize("order", [1, 2])
def test_fv_equilibrium(order):
    u0 = InitialCondition(lambda x: np.full_like(x, 0.7))
    res = fv_relaxation_solve(u0, burgers_flux(), 2.0, 1e-3, 64, 0.5, order=order)
    np.testing.assert_allclose(res.final.values, 0.7, atol=1e-14)


@pytest.mark.parametrize("order", [1, 2])
def test_fv_conservation(order):
    res = fv_relaxation_solve(step(1.0), burgers_flux(), 2.0, 1e-3, 128, 0.3, order=order,
                              times=[0.1, 0.2])
    mass = [np.sum(g.values) * g.dx for _, g in res.frames]
    assert max(abs(m - mass[0]) for m in mass) <= 1e-12
    assert [t for t, _ in res.frames] == pytest.approx([0.1, 0.2, 0.3], abs=res.dt)


def test_fv_first_order_convergence_linear():
    errs = []
    for n in (200, 400, 800):
        res = fv_relaxation_solve(sine(), linear_flux(1.0), 1.0, 1e-3, n, 0.5, order=1)
        errs.append(error_norms(res.final, exact_linear_advection(sine(), 1.0, 0.5, n))["L1"])
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all((ratios > 0.4) & (ratios < 0.6))


def test_fv_second_order_is_more_accurate():
    e = {}
    for order in (1, 2):
        res = fv_relaxation_solve(sine(), linear_flux(1.0), 1.0, 1e-3, 200, 0.5, order=order)
        e[order] = error_norms(res.final, exact_linear_advection(sine(), 1.0, 0.5, 200))["L1"]
    assert e[2] < 0.2 * e[1]


def test_fv_rejects_cfl_violation():
    with pytest.raises(ValueError, match="CFL"):
        fv_relaxation_solve(sine(), burgers_flux(), 2.0, 1e-3, 100, 0.1, dt=0.01)
    with pytest.raises(ValueError):
        fv_relaxation_solve(sine(), burgers_flux(), 2.0, 1e-3, 100, 0.1, order=3)


def test_error_norm_examples():
    g = GridFunction.from_function(shifted_sine(), 100)
    assert error_norms(g, g) == {"L1": 0.0, "L2": 0.0, "Linf": 0.0}
    h = GridFunction(g.values + 0.3)
    n = error_norms(g, h)
    assert n["Linf"] == pytest.approx(0.3) and n["L1"] == pytest.approx(0.6)
    # int_{-1}^{1} sin^2(pi x) dx = 1
    n = error_norms(GridFunction.from_function(sine(), 400), GridFunction(np.zeros(400)))
    assert n["L2"] == pytest.approx(1.0, rel=1e-10)
    # different resolutions are compared on the finer grid
    n = error_norms(GridFunction.from_function(sine(), 2000), GridFunction.from_function(sine(), 500))
    assert n["Linf"] < 1e-4


def test_grid_function_interpolation_and_csv(tmp_path):
    g = GridFunction.from_function(sine(), 50)
    assert g(g.x[3]) == pytest.approx(g.values[3])
    assert g(1.0 + g.x[0]) == pytest.approx(g(-1.0 + g.x[0]))
    path = tmp_path / "u.csv"
    g.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "u"] and len(rows) == 51
    assert float(rows[5][1]) == g.values[4]


def _moving_step(s0, t, n=400):
    x = cell_centers(n)
    return GridFunction(np.where(np.mod(x - s0 * t + 1, 2) - 1 < 0.0, 1.0, 0.0))


@pytest.mark.parametrize("s0", [-0.7, -0.25, 0.0, 0.4])
def test_shock_speed_synthetic(s0):
    times = np.linspace(0.0, 1.0, 11)
    frames = [(t, _moving_step(s0, t)) for t in times]
    assert shock_speed_estimate(frames, 0.5) == pytest.approx(s0, abs=2.0 / 400 / 1.0)


def test_shock_detection_errors():
    flat = GridFunction(np.zeros(50))
    with pytest.raises(NoShockError):
        shock_position(flat, 0.1)
    with pytest.raises(ValueError):
        shock_speed_estimate([(0.0, flat)], 0.1)


def test_fv_burgers_shock_speed_is_half_jump():
    res = fv_relaxation_solve(step(1.0), burgers_flux(), 2.0, 1e-3, 320, 0.6,
                              times=np.linspace(0.1, 0.6, 11))
    speed = shock_speed_estimate(res.frames, 0.05)
    assert speed == pytest.approx(-0.5, rel=0.02)
