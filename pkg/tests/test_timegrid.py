"""Time grid, integration operators, scalar coefficients, load signal."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hampgd import (
    TimeGrid,
    TriangleSignal,
    build_time_operators,
    time_coeffs,
    triangle_signal,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(T=0.0, n_steps=4)
    with pytest.raises(ValueError):
        TimeGrid(T=1.0, n_steps=0)


def test_grid_nodes_exact_endpoints():
    grid = TimeGrid(T=5.0, n_steps=7)
    assert grid.nodes[0] == 0.0
    assert grid.nodes[-1] == 5.0
    assert grid.n_nodes == 8


def test_two_node_operators_match_closed_form():
    """n_t=1, h=1: A_t = (1/6)[[2,1],[1,2]], C_t = (1/2)[[-1,-1],[1,1]]."""
    ops = build_time_operators(TimeGrid(T=1.0, n_steps=1))
    assert_allclose(ops.mass.toarray(), np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
    assert_allclose(ops.deriv.toarray(), np.array([[-1.0, -1.0], [1.0, 1.0]]) / 2.0)


def test_mass_integrates_constants():
    """u = v = 1 gives the interval length T."""
    grid = TimeGrid(T=3.5, n_steps=13)
    ops = build_time_operators(grid)
    one = np.ones(grid.n_nodes)
    assert_allclose(one @ (ops.mass @ one), 3.5, rtol=1e-14)


def test_deriv_integrates_linear_against_constant():
    """u = t, v = 1 on (0,1): integral of du/dt v equals 1."""
    grid = TimeGrid(T=1.0, n_steps=9)
    ops = build_time_operators(grid)
    u = grid.nodes
    v = np.ones(grid.n_nodes)
    assert_allclose(u @ (ops.deriv @ v), 1.0, rtol=1e-14)


def test_mass_exact_for_piecewise_linear_products():
    """A_t integrates products of piecewise-linear functions exactly.

    Oracle: per-interval closed form int (a + b s)(c + d s) h ds over s in
    (0,1), summed over intervals.
    """
    grid = TimeGrid(T=2.0, n_steps=11)
    ops = build_time_operators(grid)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(grid.n_nodes)
    v = rng.standard_normal(grid.n_nodes)
    h = grid.h
    exact = 0.0
    for i in range(grid.n_steps):
        a, b = u[i], u[i + 1] - u[i]
        c, d = v[i], v[i + 1] - v[i]
        exact += h * (a * c + 0.5 * (a * d + b * c) + b * d / 3.0)
    assert_allclose(u @ (ops.mass @ v), exact, rtol=1e-13)


def test_summation_by_parts_exact():
    """C_t + C_t^T equals diag(-1, 0, ..., 0, 1) bitwise."""
    grid = TimeGrid(T=4.0, n_steps=16)  # h exactly representable
    ops = build_time_operators(grid)
    S = (ops.deriv + ops.deriv.T).toarray()
    expected = np.zeros_like(S)
    expected[0, 0] = -1.0
    expected[-1, -1] = 1.0
    assert np.array_equal(S, expected)


def test_coeffs_zero_samples():
    grid = TimeGrid(T=1.0, n_steps=5)
    ops = build_time_operators(grid)
    z = np.zeros(grid.n_nodes)
    c = time_coeffs(z, z, ops)
    assert (c.kt, c.ct, c.dt, c.mt) == (0.0, 0.0, 0.0, 0.0)


def test_coeffs_linear_ramp():
    """psi_q = psi_p = t on (0,1): kt = mt = 1/3, ct = 1/2, dt = -1/2.

    dt = ct - psi_q(1) psi_p(1) = 1/2 - 1 as the boundary-term identity
    requires.
    """
    grid = TimeGrid(T=1.0, n_steps=64)
    ops = build_time_operators(grid)
    t = grid.nodes
    c = time_coeffs(t, t, ops)
    assert_allclose(c.kt, 1.0 / 3.0, rtol=1e-12)
    assert_allclose(c.mt, 1.0 / 3.0, rtol=1e-12)
    assert_allclose(c.ct, 0.5, rtol=1e-12)
    assert_allclose(c.dt, -0.5, rtol=1e-12)


def test_coeffs_constants_computed_oracle():
    """psi_q = psi_p = 1: direct evaluation of the discrete operators.

    Oracle: 1^T C_t 1 sums all C_t entries, which cancel to zero, so
    ct = dt = 0; this also satisfies dt - ct = psi(0)psi(0) - psi(T)psi(T) = 0.
    """
    grid = TimeGrid(T=1.0, n_steps=10)
    ops = build_time_operators(grid)
    one = np.ones(grid.n_nodes)
    oracle_ct = float(one @ (ops.deriv @ one))
    assert oracle_ct == 0.0
    c = time_coeffs(one, one, ops)
    assert_allclose(c.ct, 0.0, atol=1e-15)
    assert_allclose(c.dt, 0.0, atol=1e-15)
    assert_allclose(c.kt, 1.0, rtol=1e-14)


def test_coeffs_size_mismatch():
    grid = TimeGrid(T=1.0, n_steps=5)
    ops = build_time_operators(grid)
    with pytest.raises(ValueError):
        time_coeffs(np.zeros(4), np.zeros(6), ops)


def test_coeffs_nonnegative_quadratic_terms(rng):
    """kt and mt are A_t-quadratic forms, nonnegative for any samples."""
    grid = TimeGrid(T=2.0, n_steps=17)
    ops = build_time_operators(grid)
    for _ in range(25):
        c = time_coeffs(
            rng.standard_normal(grid.n_nodes), rng.standard_normal(grid.n_nodes), ops
        )
        assert c.kt >= 0.0
        assert c.mt >= 0.0


def test_coeffs_boundary_identity(rng):
    """dt = ct - (psi_q(T) psi_p(T) - psi_q(0) psi_p(0)) to 1e-14."""
    grid = TimeGrid(T=2.0, n_steps=17)
    ops = build_time_operators(grid)
    for _ in range(25):
        pq = rng.standard_normal(grid.n_nodes)
        pp = rng.standard_normal(grid.n_nodes)
        c = time_coeffs(pq, pp, ops)
        boundary = pq[-1] * pp[-1] - pq[0] * pp[0]
        assert abs(c.dt - (c.ct - boundary)) <= 1e-14 * max(
            1.0, abs(c.ct), abs(c.dt)
        )


def test_triangle_signal_branch_values():
    t1, t2, F = 0.625, 0.75, 0.5e9
    assert triangle_signal(0.0, t1, t2, F) == 0.0
    assert_allclose(triangle_signal(t1, t1, t2, F), -0.5 * F)
    assert triangle_signal(t2, t1, t2, F) == 0.0
    assert triangle_signal(4.9, t1, t2, F) == 0.0
    assert_allclose(triangle_signal(0.5 * t1, t1, t2, F), 0.5 * F)


def test_triangle_signal_validation():
    with pytest.raises(ValueError):
        triangle_signal(0.1, 0.8, 0.75, 1.0)
    with pytest.raises(ValueError):
        TriangleSignal(t1=0.8, t2=0.75, amplitude=1.0)


def test_triangle_signal_vectorized_quadrature():
    """A_t against ones reduces to the trapezoid rule on the sampled signal.

    Oracle: hand trapezoid loop.  The analytic integral of the continuous
    signal differs by O(h) because of the jump at t1; the discrete quadrature
    is the value every solver stage actually sees.
    """
    sig = TriangleSignal(t1=0.625, t2=0.75, amplitude=0.5e9)
    grid = TimeGrid(T=5.0, n_steps=40)  # t1, t2 are grid nodes
    ops = build_time_operators(grid)
    samples = sig(grid.nodes)
    assert samples.shape == (grid.n_nodes,)
    quad = np.ones(grid.n_nodes) @ (ops.mass @ samples)
    trapezoid = sum(
        0.5 * grid.h * (samples[i] + samples[i + 1]) for i in range(grid.n_steps)
    )
    assert_allclose(quad, trapezoid, rtol=1e-13)


def test_triangle_signal_quadrature_approaches_true_integral():
    """The sampled-signal quadrature converges (O(h), jump at t1) to the
    closed-form integral F t1/2 - F (t2 - t1)/4."""
    sig = TriangleSignal(t1=0.625, t2=0.75, amplitude=0.5e9)
    errs = []
    for n in (160, 320, 640):
        grid = TimeGrid(T=5.0, n_steps=n)
        ops = build_time_operators(grid)
        quad = np.ones(grid.n_nodes) @ (ops.mass @ sig(grid.nodes))
        errs.append(abs(quad - sig.integral()))
    assert errs[2] < errs[1] < errs[0]
    # the lost area at the jump is 0.75 F h, i.e. 8/3 h relative
    assert errs[2] <= 0.03 * abs(sig.integral())
