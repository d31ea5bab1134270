"""Full-order Crank-Nicolson reference solver, energy norm and baselines.

Hamilton's equations  dp/dt + K q = f,  dq/dt - M^{-1} p = 0  are integrated
with the implicit midpoint (Crank-Nicolson) rule.  Per step the 2n system is
reduced by a Schur complement to one solve with (M + h^2/4 K), factorized once
and reused for all steps.
"""

from dataclasses import dataclass

import numpy as np

from .sparsela import SpdFactor, as_sparse
from .timegrid import build_time_operators


class ZeroReferenceError(ValueError):
    """Relative error against a reference of zero energy norm is undefined."""


@dataclass(frozen=True)
class Trajectory:
    """Phase-space history: column i holds the state at grid node t^i."""

    Q: np.ndarray  # (n, n_steps + 1) displacements
    P: np.ndarray  # (n, n_steps + 1) momenta
    grid: object

    @property
    def n_dof(self):
        return self.Q.shape[0]


def solve_fom(K, M, load, grid, q0=None, p0=None):
    """Crank-Nicolson integration of the full-order Hamiltonian system.

    Midpoint form per step i:
        (p_i - p_{i-1})/h + K (q_i + q_{i-1})/2 = (f_i + f_{i-1})/2
        (q_i - q_{i-1})/h - M^{-1} (p_i + p_{i-1})/2 = 0
    reduced to (M + h^2/4 K) w = 2 p_{i-1} - h K q_{i-1} + h/2 (f_i + f_{i-1})
    with q_i = q_{i-1} + h/2 w and p_i = M w - p_{i-1}.
    """
    K = as_sparse(K)
    M = as_sparse(M)
    n = K.shape[0]
    h = grid.h
    fac = SpdFactor(M + (0.25 * h * h) * K, label="M + h^2/4 K")

    terms = load.sampled(grid) if load is not None else []

    q = np.zeros(n) if q0 is None else np.asarray(q0, dtype=float).copy()
    p = np.zeros(n) if p0 is None else np.asarray(p0, dtype=float).copy()
    Q = np.empty((n, grid.n_nodes))
    P = np.empty((n, grid.n_nodes))
    Q[:, 0] = q
    P[:, 0] = p
    for i in range(1, grid.n_nodes):
        rhs = 2.0 * p - h * (K @ q)
        for vec, g in terms:
            rhs += (0.5 * h) * (g[i] + g[i - 1]) * vec
        w = fac.solve(rhs)
        q = q + (0.5 * h) * w
        p = M @ w - p
        Q[:, i] = q
        P[:, i] = p
    return Trajectory(Q=Q, P=P, grid=grid)


def hamiltonian_energy(Q, P, K, M_factor):
    """H(t) = 1/2 q^T K q + 1/2 p^T M^{-1} p at every column (external term omitted)."""
    K = as_sparse(K)
    eq = np.einsum("ij,ij->j", Q, K @ Q)
    ep = np.einsum("ij,ij->j", P, M_factor.solve(P))
    return 0.5 * (eq + ep)


def _energy_sq(Qa, Pa, K, M_factor, ops, Qb=None, Pb=None, block=512):
    """Squared energy norm of (Qa - Qb, Pa - Pb), time-integrated with A_t.

    Works in column blocks so no second full-size temporary is created; the
    quadratic form sum_{ij} A_t[i,j] x_i^T Op x_j only needs the diagonal and
    first off-diagonal of A_t.
    """
    dw, ow = ops.mass_diagonals
    n_cols = Qa.shape[1]
    total = 0.0
    prev_q = prev_p = None
    for start in range(0, n_cols, block):
        end = min(start + block, n_cols)
        q = Qa[:, start:end] - (0.0 if Qb is None else Qb[:, start:end])
        p = Pa[:, start:end] - (0.0 if Pb is None else Pb[:, start:end])
        wq = K @ q
        wp = M_factor.solve(p)
        total += dw[start:end] @ np.einsum("ij,ij->j", q, wq)
        total += dw[start:end] @ np.einsum("ij,ij->j", p, wp)
        # off-diagonal pairs (i, i+1) inside the block ...
        total += 2.0 * (ow[start : end - 1] @ np.einsum("ij,ij->j", q[:, :-1], wq[:, 1:]))
        total += 2.0 * (ow[start : end - 1] @ np.einsum("ij,ij->j", p[:, :-1], wp[:, 1:]))
        # ... and the pair straddling the block boundary
        if prev_q is not None:
            total += 2.0 * ow[start - 1] * (prev_q @ wq[:, 0] + prev_p @ wp[:, 0])
        prev_q = q[:, -1]
        prev_p = p[:, -1]
    return 0.5 * total


def energy_norm(traj, K, M, ops=None, M_factor=None):
    """Space-time energy norm sqrt(int 1/2 p^T M^{-1} p + 1/2 q^T K q dt).

    The time integral uses the piecewise-linear mass matrix A_t (exact for
    trajectories sampled on the grid); M^{-1} acts through factor solves.
    """
    K = as_sparse(K)
    if ops is None:
        ops = build_time_operators(traj.grid)
    if ops.grid.n_nodes != traj.Q.shape[1]:
        raise ValueError("trajectory and time operators live on different grids")
    if M_factor is None:
        M_factor = SpdFactor(as_sparse(M), label="M")
    val = _energy_sq(traj.Q, traj.P, K, M_factor, ops)
    return float(np.sqrt(max(val, 0.0)))


def rom_error(fom, rom, K, M, ops=None, M_factor=None):
    """Relative energy-norm error ||u_FEM - u_ROM|| / ||u_FEM||."""
    if fom.Q.shape != rom.Q.shape:
        raise ValueError(
            f"trajectories disagree: {fom.Q.shape} vs {rom.Q.shape}"
        )
    K = as_sparse(K)
    if ops is None:
        ops = build_time_operators(fom.grid)
    if M_factor is None:
        M_factor = SpdFactor(as_sparse(M), label="M")
    ref = _energy_sq(fom.Q, fom.P, K, M_factor, ops)
    if ref <= 0.0:
        raise ZeroReferenceError("reference trajectory has zero energy norm")
    diff = _energy_sq(fom.Q, fom.P, K, M_factor, ops, Qb=rom.Q, Pb=rom.P)
    return float(np.sqrt(max(diff, 0.0) / ref))


def modal_reference(K, M, r, load, grid, basis=None, tol=1e-10, seed=0):
    """Modal Decomposition baseline: Crank-Nicolson on the r lowest eigenpairs.

    Hamilton's equations are projected with the symplectic eigen-lift
    (V, M V); the reduced stiffness is diag(lambda) and the reduced mass the
    identity, so each step costs O(r).  The result is lifted back to full
    space.
    """
    from .ritz import compute_ritz_pairs

    K = as_sparse(K)
    M = as_sparse(M)
    if basis is None:
        basis = compute_ritz_pairs(K, M, r, tol=tol, seed=seed)
    lam = basis.values[:r]
    V = basis.vectors[:, :r]

    h = grid.h
    terms = [(V.T @ vec, g) for vec, g in (load.sampled(grid) if load else [])]
    denom = 1.0 + (0.25 * h * h) * lam

    qh = np.zeros(r)
    ph = np.zeros(r)
    Qh = np.empty((r, grid.n_nodes))
    Ph = np.empty((r, grid.n_nodes))
    Qh[:, 0] = qh
    Ph[:, 0] = ph
    for i in range(1, grid.n_nodes):
        rhs = 2.0 * ph - h * lam * qh
        for vec, g in terms:
            rhs += (0.5 * h) * (g[i] + g[i - 1]) * vec
        w = rhs / denom
        qh = qh + (0.5 * h) * w
        ph = w - ph
        Qh[:, i] = qh
        Ph[:, i] = ph
    MV = M @ V
    return Trajectory(Q=V @ Qh, P=MV @ Ph, grid=grid)


def svd_reference(fom, m):
    """Best a-posteriori rank-m baseline: truncated SVD per snapshot block.

    The displacement and momentum blocks are decomposed independently; m = 0
    returns the zero trajectory and m beyond the actual rank reproduces the
    input.
    """
    if m < 0:
        raise ValueError(f"rank must be nonnegative, got {m}")
    if m == 0:
        return Trajectory(
            Q=np.zeros_like(fom.Q), P=np.zeros_like(fom.P), grid=fom.grid
        )

    def truncate(A):
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        k = min(m, s.size)
        return (U[:, :k] * s[:k]) @ Vt[:k]

    return Trajectory(Q=truncate(fom.Q), P=truncate(fom.P), grid=fom.grid)


def save_trajectory(traj, path, fmt="npz"):
    """Snapshot dump with a header recording (n, n_t, h_t, dof ordering)."""
    header = dict(
        n=traj.n_dof,
        n_t=traj.grid.n_steps,
        h_t=traj.grid.h,
        ordering="rows=dof (node-major, xyz-interleaved), cols=time nodes",
    )
    if fmt == "npz":
        np.savez(path, Q=traj.Q, P=traj.P, **header)
    elif fmt == "csv":
        with open(path, "w") as f:
            f.write(
                f"# n={header['n']} n_t={header['n_t']} h_t={header['h_t']!r} "
                f"ordering={header['ordering']}; Q block then P block\n"
            )
            np.savetxt(f, traj.Q, delimiter=",")
            np.savetxt(f, traj.P, delimiter=",")
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")
