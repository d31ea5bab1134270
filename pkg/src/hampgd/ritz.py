"""Ritz pairs of the pencil K u = lambda M u and the symplectic eigen-lift.

The r pairs of smallest magnitude are computed by shift-invert Lanczos with
shift zero: K is factorized once and the recurrence runs on K^{-1} M, which is
self-adjoint in the M inner product, with full reorthogonalization.  A final
dense Rayleigh-Ritz rotation of the converged subspace enforces

    V^T M V = I_r      and      V^T K V = diag(lambda)

to machine precision.  Breakdown (invariant subspace found early, e.g. K = M)
restarts with a fresh random vector M-orthogonalized against the basis.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .mesh_fem import SeparatedLoad
from .sparsela import SpdFactor, as_sparse


class EigenConvergenceError(RuntimeError):
    """Eigen iteration ran out of budget; carries the residuals it reached."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class RitzBasis:
    """Ascending Ritz values (1/s^2) and M-orthonormal Ritz vectors."""

    values: np.ndarray    # (r,)
    vectors: np.ndarray   # (n, r)
    residuals: np.ndarray # (r,) achieved relative eigen-residuals

    @property
    def r(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.vectors.shape[0]


def _rayleigh_ritz(U, K, M):
    """Rotate a subspace basis U so U^T K U is diagonal and U^T M U = I."""
    Ar = U.T @ (K @ U)
    Br = U.T @ (M @ U)
    lam, W = la.eigh(Ar, Br)
    V = U @ W
    # deterministic sign: largest-magnitude component positive
    idx = np.abs(V).argmax(axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0.0] = 1.0
    return lam, V * signs


def _residuals(V, lam, K, M):
    R = K @ V - (M @ V) * lam
    num = np.linalg.norm(R, axis=0)
    den = np.linalg.norm(K @ V, axis=0)
    den[den == 0.0] = 1.0
    return num / den


def compute_ritz_pairs(K, M, r, tol=1e-8, max_iter=None, seed=0, check_every=10):
    """Lowest r Ritz pairs of K u = lambda M u.

    Parameters
    ----------
    tol : convergence threshold on the relative residual ||K v - lambda M v|| / ||K v||
    max_iter : Lanczos budget, default 10 r (always capped at n)
    seed : seed of the deterministic random start vector
    """
    K = as_sparse(K)
    M = as_sparse(M)
    n = K.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n = {n}, got r = {r}")
    budget = min(n, 10 * r if max_iter is None else max_iter)
    budget = max(budget, r)

    Kfac = SpdFactor(K, label="K")
    rng = np.random.default_rng(seed)

    V = np.empty((n, budget))
    MV = np.empty((n, budget))
    alpha = np.zeros(budget)
    beta = np.zeros(budget)  # beta[j] couples columns j and j+1 (0 across restarts)

    def m_orthonormalize(w, j):
        # two-pass full reorthogonalization against columns 0..j-1
        for _ in range(2):
            if j > 0:
                w = w - V[:, :j] @ (MV[:, :j].T @ w)
        nrm = np.sqrt(w @ (M @ w))
        return w, nrm

    def fresh_vector(j):
        for _ in range(5):
            w, nrm = m_orthonormalize(rng.standard_normal(n), j)
            if nrm > 1e-8:
                return w / nrm
        raise EigenConvergenceError(
            "could not generate a new M-orthogonal direction", np.array([])
        )

    V[:, 0] = fresh_vector(0)
    MV[:, 0] = M @ V[:, 0]
    j = 0  # index of the newest column
    tiny = np.finfo(float).eps ** 0.75
    gate = 1.0  # cheap-estimate margin, tightened when an explicit check fails

    achieved = None
    while True:
        # one Lanczos step on K^{-1} M in the M inner product
        w = Kfac.solve(MV[:, j])
        alpha[j] = w @ MV[:, j]
        w = w - alpha[j] * V[:, j]
        if j > 0 and beta[j - 1] != 0.0:
            w = w - beta[j - 1] * V[:, j - 1]
        w, nrm = m_orthonormalize(w, j + 1)

        k = j + 1  # current subspace dimension (columns 0..j complete)
        done_expanding = k >= budget
        if k >= r and (done_expanding or k % check_every == 0):
            theta, Y = la.eigh_tridiagonal(alpha[:k], beta[: k - 1])
            order = np.argsort(theta)[::-1][:r]  # largest theta = smallest lambda
            # residual bound of the shift-inverted pairs: beta |y_last| / theta;
            # the explicit pencil residual is only evaluated once this clears
            theta_sel = np.maximum(theta[order], tiny)
            cheap = nrm * np.abs(Y[k - 1, order]) / theta_sel
            if done_expanding or k >= n or np.all(cheap <= gate * tol):
                U = V[:, :k] @ Y[:, order]
                lam, W = _rayleigh_ritz(U, K, M)
                res = _residuals(W, lam, K, M)
                achieved = (lam, W, res)
                if np.all(res <= tol) or k >= n:
                    return RitzBasis(values=lam, vectors=W, residuals=res)
                gate *= 0.25
        if done_expanding:
            break

        if nrm <= tiny * max(1.0, abs(alpha[j])):
            # invariant subspace: deflate and restart in a new direction
            V[:, k] = fresh_vector(k)
            beta[j] = 0.0
        else:
            V[:, k] = w / nrm
            beta[j] = nrm
        MV[:, k] = M @ V[:, k]
        j += 1

    if achieved is not None and np.all(achieved[2] <= tol):
        lam, W, res = achieved
        return RitzBasis(values=lam, vectors=W, residuals=res)
    res = achieved[2] if achieved is not None else np.full(r, np.inf)
    raise EigenConvergenceError(
        f"Ritz iteration did not reach tol={tol:g} within {budget} steps; "
        f"worst residual {res.max():.3e}",
        res,
    )


@dataclass(frozen=True)
class SymplecticMap:
    """Block-diagonal lift diag(V, M V) from reduced to full phase space.

    Membership in the symplectic Stiefel manifold (R^T J_{2n} R = J_{2r})
    follows from V^T M V = I.  The reduced Hamiltonian Hessian is
    diag(lambda) on the displacement block and the identity on the momentum
    block.
    """

    basis: RitzBasis
    momentum_vectors: np.ndarray  # M V, (n, r)

    @property
    def r(self):
        return self.basis.r

    def lift_displacement(self, coords):
        return self.basis.vectors @ coords

    def lift_momentum(self, coords):
        return self.momentum_vectors @ coords

    def reduced_hessian_blocks(self):
        return self.basis.values.copy(), np.ones(self.r)


def build_symplectic_map(basis, M):
    M = as_sparse(M)
    return SymplecticMap(basis=basis, momentum_vectors=M @ basis.vectors)


def project_load(load, basis):
    """Reduced separated load: spatial vectors V^T b, time signals unchanged."""
    terms = tuple((basis.vectors.T @ vec, sig) for vec, sig in load.terms)
    return SeparatedLoad(terms=terms)


def save_ritz_basis(basis, path):
    np.savez(
        path,
        values=basis.values,
        vectors=basis.vectors,
        residuals=basis.residuals,
        n=basis.n,
        r=basis.r,
    )


def load_ritz_basis(path):
    data = np.load(path)
    return RitzBasis(
        values=data["values"], vectors=data["vectors"], residuals=data["residuals"]
    )
