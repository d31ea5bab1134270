"""Sparse symmetric factorization helpers (factorize once, solve many)."""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class SingularOperatorError(RuntimeError):
    """Raised when a sparse factorization fails on a singular operator."""


def as_sparse(A):
    """Coerce scalars, dense arrays or sparse matrices to square CSR."""
    if sp.issparse(A):
        return A.tocsr()
    arr = np.atleast_2d(np.asarray(A, dtype=float))
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"operator must be square, got shape {arr.shape}")
    return sp.csr_matrix(arr)


class SpdFactor:
    """Reusable factorization of a sparse symmetric positive definite matrix.

    Backed by SuperLU in symmetric mode; plays the role of a Cholesky
    factorization (the operator inverse is only ever applied through
    triangular solves, never formed).
    """

    def __init__(self, A, label="operator"):
        A = as_sparse(A).tocsc()
        self.shape = A.shape
        try:
            self._lu = splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SingularOperatorError(f"factorization of {label} failed: {exc}") from exc

    def solve(self, b):
        """Solve A x = b for one right-hand side or a stack of columns."""
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self._lu.solve(b)
        return self._lu.solve(b)


def max_abs_asymmetry(A):
    """Largest |A - A.T| entry; zero for exactly symmetric matrices."""
    d = (A - A.T).tocoo()
    if d.nnz == 0:
        return 0.0
    return float(np.abs(d.data).max())
