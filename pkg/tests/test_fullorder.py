"""Full-order Crank-Nicolson reference, energy norm, SVD/MD baselines."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hampgd import (
    TimeGrid,
    Trajectory,
    ZeroReferenceError,
    build_time_operators,
    energy_norm,
    hamiltonian_energy,
    modal_reference,
    rom_error,
    save_trajectory,
    solve_fom,
    svd_reference,
)
from hampgd.sparsela import SpdFactor

ONE = np.array([[1.0]])


def scalar_grid(n_steps, T=2.0):
    return TimeGrid(T=T, n_steps=n_steps)


def test_zero_load_zero_ic_stays_zero(beam_small):
    traj = solve_fom(beam_small.K, beam_small.M, None, beam_small.grid)
    assert np.all(traj.Q == 0.0)
    assert np.all(traj.P == 0.0)


def test_scalar_oscillator_conserves_energy():
    """M = K = 1, f = 0, (q0, p0) = (1, 0): midpoint keeps p^2 + q^2 = 1."""
    grid = scalar_grid(500, T=10.0)
    traj = solve_fom(ONE, ONE, None, grid, q0=[1.0], p0=[0.0])
    energy = 0.5 * (traj.Q[0] ** 2 + traj.P[0] ** 2)
    assert np.abs(energy - 0.5).max() <= 1e-12


def test_scalar_oscillator_second_order():
    """Halving h reduces the max error against cos(t) by about 4."""
    errs = []
    for n in (100, 200):
        grid = scalar_grid(n, T=2.0)
        traj = solve_fom(ONE, ONE, None, grid, q0=[1.0], p0=[0.0])
        errs.append(np.abs(traj.Q[0] - np.cos(grid.nodes)).max())
    order = np.log2(errs[0] / errs[1])
    assert 1.9 <= order <= 2.1


def test_initial_state_is_first_column(beam_small):
    rng = np.random.default_rng(3)
    q0 = rng.standard_normal(beam_small.mesh.n_dof)
    traj = solve_fom(beam_small.K, beam_small.M, None, beam_small.grid, q0=q0)
    assert np.array_equal(traj.Q[:, 0], q0)
    assert np.array_equal(traj.P[:, 0], np.zeros_like(q0))


def test_free_vibration_energy_drift(beam_small):
    """With zero load and nonzero initial state the Hamiltonian is conserved."""
    b = beam_small.load.terms[0][0]
    q0 = b / np.linalg.norm(b)
    traj = solve_fom(beam_small.K, beam_small.M, None, beam_small.grid, q0=q0)
    H = hamiltonian_energy(traj.Q, traj.P, beam_small.K, SpdFactor(beam_small.M))
    drift = np.abs(H - H[0]).max() / abs(H[0])
    assert drift <= 1e-10


def test_energy_norm_zero_and_self_error(beam_small):
    zero = Trajectory(
        Q=np.zeros((beam_small.mesh.n_dof, beam_small.grid.n_nodes)),
        P=np.zeros((beam_small.mesh.n_dof, beam_small.grid.n_nodes)),
        grid=beam_small.grid,
    )
    assert energy_norm(zero, beam_small.K, beam_small.M, beam_small.ops) == 0.0
    fom = beam_small.fom
    assert rom_error(fom, fom, beam_small.K, beam_small.M, beam_small.ops) == 0.0


def test_energy_norm_constant_state(beam_small):
    """q = q0, p = 0 over (0,T) gives sqrt(T/2 q0^T K q0)."""
    rng = np.random.default_rng(5)
    q0 = rng.standard_normal(beam_small.mesh.n_dof)
    Q = np.tile(q0[:, None], (1, beam_small.grid.n_nodes))
    traj = Trajectory(Q=Q, P=np.zeros_like(Q), grid=beam_small.grid)
    expected = np.sqrt(beam_small.grid.T * 0.5 * q0 @ (beam_small.K @ q0))
    assert_allclose(
        energy_norm(traj, beam_small.K, beam_small.M, beam_small.ops),
        expected,
        rtol=1e-12,
    )


def test_rom_error_normalization_and_homogeneity(beam_small):
    fom = beam_small.fom
    zero = Trajectory(Q=np.zeros_like(fom.Q), P=np.zeros_like(fom.P), grid=fom.grid)
    assert_allclose(
        rom_error(fom, zero, beam_small.K, beam_small.M, beam_small.ops), 1.0,
        rtol=1e-12,
    )
    delta = 1e-3
    scaled = Trajectory(Q=(1 + delta) * fom.Q, P=(1 + delta) * fom.P, grid=fom.grid)
    assert_allclose(
        rom_error(fom, scaled, beam_small.K, beam_small.M, beam_small.ops),
        delta,
        rtol=1e-9,
    )


def test_rom_error_scale_invariance(beam_small):
    fom = beam_small.fom
    rom = svd_reference(fom, 2)
    e1 = rom_error(fom, rom, beam_small.K, beam_small.M, beam_small.ops)
    c = 137.5
    fom_s = Trajectory(Q=c * fom.Q, P=c * fom.P, grid=fom.grid)
    rom_s = Trajectory(Q=c * rom.Q, P=c * rom.P, grid=fom.grid)
    e2 = rom_error(fom_s, rom_s, beam_small.K, beam_small.M, beam_small.ops)
    assert abs(e1 - e2) <= 1e-14 + 1e-12 * e1


def test_rom_error_zero_reference(beam_small):
    zero = Trajectory(
        Q=np.zeros((beam_small.mesh.n_dof, beam_small.grid.n_nodes)),
        P=np.zeros_like(np.zeros((beam_small.mesh.n_dof, beam_small.grid.n_nodes))),
        grid=beam_small.grid,
    )
    with pytest.raises(ZeroReferenceError):
        rom_error(zero, beam_small.fom, beam_small.K, beam_small.M, beam_small.ops)


def test_modal_scalar_system_matches_fom():
    grid = scalar_grid(50, T=1.0)
    from hampgd import SeparatedLoad

    load = SeparatedLoad(terms=((np.array([1.0]), lambda t: np.sin(np.asarray(t))),))
    fom = solve_fom(ONE, ONE, load, grid)
    md = modal_reference(ONE, ONE, 1, load, grid)
    assert_allclose(md.Q, fom.Q, atol=1e-12)
    assert_allclose(md.P, fom.P, atol=1e-12)


def test_modal_complete_basis_matches_fom(beam_tiny):
    n = beam_tiny.mesh.n_dof
    md = modal_reference(beam_tiny.K, beam_tiny.M, n, beam_tiny.load, beam_tiny.grid)
    eps = rom_error(md, beam_tiny.fom, beam_tiny.K, beam_tiny.M, beam_tiny.ops)
    assert eps <= 1e-8


def test_modal_error_decreases_with_r(beam_small):
    errs = []
    for r in (5, 10, 20):
        md = modal_reference(beam_small.K, beam_small.M, r, beam_small.load, beam_small.grid)
        errs.append(
            rom_error(beam_small.fom, md, beam_small.K, beam_small.M, beam_small.ops)
        )
    assert errs[2] < errs[1] < errs[0]


def test_svd_full_rank_exact(beam_tiny):
    fom = beam_tiny.fom
    full = svd_reference(fom, min(fom.Q.shape))
    scale = np.abs(fom.Q).max()
    assert np.abs(full.Q - fom.Q).max() <= 1e-10 * scale
    assert np.abs(full.P - fom.P).max() <= 1e-10 * np.abs(fom.P).max()


def test_svd_rank_one_synthetic():
    grid = scalar_grid(30, T=1.0)
    rng = np.random.default_rng(11)
    a = rng.standard_normal(17)
    b = rng.standard_normal(grid.n_nodes)
    Q = np.outer(a, b)
    traj = Trajectory(Q=Q, P=0.5 * Q, grid=grid)
    rec = svd_reference(traj, 1)
    assert np.abs(rec.Q - Q).max() <= 1e-12 * np.abs(Q).max()


def test_svd_zero_rank_and_monotonicity(beam_small):
    fom = beam_small.fom
    zero = svd_reference(fom, 0)
    assert np.all(zero.Q == 0.0)
    # Frobenius truncation errors are exactly non-increasing in m
    s = np.linalg.svd(fom.Q, compute_uv=False)
    tails = [np.sqrt((s[m:] ** 2).sum()) for m in (1, 5, 20)]
    assert tails[0] >= tails[1] >= tails[2]
    errs = [
        rom_error(
            fom, svd_reference(fom, m), beam_small.K, beam_small.M, beam_small.ops
        )
        for m in (1, 5, 20)
    ]
    assert errs[0] >= errs[1] >= errs[2]


def test_trajectory_export_roundtrip(tmp_path, beam_tiny):
    fom = beam_tiny.fom
    path = str(tmp_path / "traj.npz")
    save_trajectory(fom, path)
    data = np.load(path)
    assert data["n"] == beam_tiny.mesh.n_dof
    assert data["n_t"] == beam_tiny.grid.n_steps
    assert_allclose(data["Q"], fom.Q)
    csv_path = str(tmp_path / "traj.csv")
    save_trajectory(fom, csv_path, fmt="csv")
    first = open(csv_path).readline()
    assert first.startswith("#") and "ordering" in first
