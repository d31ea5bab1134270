"""Biorthogonalization of the PGD basis into a symplectic reduced basis.

The greedy solver orthonormalizes S_q against K and S_p against M^{-1}, so
S^T J_{2n} S is generally not J_{2m}.  Recombining the columns with m x m
factors Q and P such that (S_q Q)^T (S_p P) = I restores symplecticity as a
cheap post-processing step.  Two routes: LU of the pairing S_q^T S_p, or its
SVD with a pseudo-inverse rule for vanishing singular values.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la


@dataclass(frozen=True)
class BiorthogonalFactors:
    """Column-recombination factors with (S_q Q)^T (S_p P) = I_m."""

    Q: np.ndarray
    P: np.ndarray
    method: str
    permutation: np.ndarray  # row permutation folded into Q (LU route)


def biorthogonalize(S_q, S_p, method="lu", cutoff=1e-12):
    """Factors rendering the mode blocks biorthogonal.

    LU route: S_q^T S_p = (perm L) U gives Q = perm L^{-T}, P = U^{-1}.
    SVD route: S_q^T S_p = U Sigma V^T gives Q = U Sigma^{-1/2},
    P = V Sigma^{-1/2} (orthogonal-inverse identity U^{-T} = U), with
    singular values at or below `cutoff` * sigma_max treated as zero.
    """
    S_q = np.asarray(S_q)
    S_p = np.asarray(S_p)
    if S_q.shape[1] != S_p.shape[1]:
        raise ValueError("mode blocks must have the same number of columns")
    m = S_q.shape[1]
    if m == 0:
        empty = np.zeros((0, 0))
        return BiorthogonalFactors(
            Q=empty, P=empty, method=method, permutation=np.zeros(0, dtype=int)
        )
    A = S_q.T @ S_p

    if method == "lu":
        perm, L, U = la.lu(A)
        if np.any(np.abs(np.diag(U)) == 0.0):
            raise la.LinAlgError(
                "singular pairing S_q^T S_p: LU pivot failed, use the SVD route"
            )
        Q = perm @ la.solve_triangular(L, np.eye(m), lower=True).T
        P = la.solve_triangular(U, np.eye(m), lower=False)
        return BiorthogonalFactors(
            Q=Q, P=P, method="lu", permutation=np.argmax(perm, axis=0)
        )
    if method == "svd":
        U, s, Vt = la.svd(A)
        inv_sqrt = np.where(s > cutoff * s[0], 1.0 / np.sqrt(np.maximum(s, 1e-300)), 0.0)
        Q = U * inv_sqrt[None, :]
        P = Vt.T * inv_sqrt[None, :]
        return BiorthogonalFactors(
            Q=Q, P=P, method="svd", permutation=np.arange(m)
        )
    raise ValueError(f"unknown biorthogonalization method {method!r}")


def symplectic_defect(S_q, S_p):
    """Frobenius distance of S^T J_{2n} S from J_{2m}.

    Blockwise the product is [[0, S_q^T S_p], [-S_p^T S_q, 0]], so the defect
    is sqrt(2) ||S_q^T S_p - I||_F.
    """
    S_q = np.asarray(S_q)
    S_p = np.asarray(S_p)
    m = S_q.shape[1]
    if m == 0:
        return 0.0
    A = S_q.T @ S_p
    return float(np.sqrt(2.0) * np.linalg.norm(A - np.eye(m), ord="fro"))


def apply_factors(solution, factors):
    """Recombine a separated solution into the biorthogonal basis.

    Spatial blocks are multiplied by the factors and the temporal histories are
    counter-transformed (psi_q -> Q^{-1} psi_q, psi_p -> P^{-1} psi_p), so the
    reconstruction z_m(t) is unchanged.
    """
    from .pgd import SeparatedSolution

    psi_q = la.solve(factors.Q, solution.psi_q.T).T
    psi_p = la.solve(factors.P, solution.psi_p.T).T
    return SeparatedSolution(
        variant=solution.variant,
        modes_q=solution.modes_q @ factors.Q,
        modes_p=solution.modes_p @ factors.P,
        psi_q=psi_q,
        psi_p=psi_p,
        grid=solution.grid,
        lift=solution.lift,
    )


def save_factors(factors, path):
    np.savez(
        path,
        Q=factors.Q,
        P=factors.P,
        method=factors.method,
        permutation=factors.permutation,
    )
