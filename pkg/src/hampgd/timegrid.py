"""Uniform time grid, piecewise-linear time integration operators and load signals.

The two sparse operators integrate products of continuous piecewise-linear
functions sampled on the grid nodes:

    integral of u*v  over (0,T)   ->  u @ A_t @ v      (symmetric, tridiagonal)
    integral of du/dt * v         ->  u @ C_t @ v      (tridiagonal)

C_t satisfies the discrete summation-by-parts identity
C_t + C_t.T = diag(-1, 0, ..., 0, 1) exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of (0, T) into n_steps intervals (n_steps + 1 nodes)."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError(f"final time must be positive, got T={self.T}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one interval, got n_steps={self.n_steps}")

    @property
    def h(self):
        """Interval size T / n_steps."""
        return self.T / self.n_steps

    @property
    def n_nodes(self):
        return self.n_steps + 1

    @property
    def nodes(self):
        """Grid nodes t^0 ... t^{n_steps}; endpoints are exactly 0 and T."""
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass(frozen=True)
class TimeOperators:
    """Piecewise-linear time integration matrices on a grid.

    mass:  A_t, (n+1) x (n+1) tridiagonal, units of time.
    deriv: C_t, (n+1) x (n+1) tridiagonal, dimensionless.
    """

    grid: TimeGrid
    mass: sp.csr_matrix
    deriv: sp.csr_matrix

    @property
    def mass_diagonals(self):
        """(main, upper) diagonals of A_t, handy for quadratic-form sums."""
        return self.mass.diagonal(0), self.mass.diagonal(1)


def build_time_operators(grid):
    """Assemble the mass (A_t) and derivative (C_t) matrices for a grid.

    A_t = h/6 * tridiag(1, [2,4,...,4,2], 1) is the 1D P1 mass matrix.
    C_t rows accumulate (u_i - u_{i-1})(v_{i-1} + v_i)/2 per interval.
    """
    n = grid.n_nodes
    h = grid.h

    main = np.full(n, 4.0)
    main[0] = main[-1] = 2.0
    off = np.ones(n - 1)
    mass = sp.diags([off, main, off], [-1, 0, 1], format="csr") * (h / 6.0)

    cmain = np.zeros(n)
    cmain[0] = -0.5
    cmain[-1] = 0.5
    deriv = sp.diags(
        [np.full(n - 1, 0.5), cmain, np.full(n - 1, -0.5)], [-1, 0, 1], format="csr"
    )
    return TimeOperators(grid=grid, mass=mass, deriv=deriv)


@dataclass(frozen=True)
class TimeCoeffs:
    """Scalar time integrals entering the spatial problem of one enrichment.

    kt: integral of psi_q^2            (units s)
    ct: integral of psi_q * dpsi_p/dt  (dimensionless)
    dt: -integral of dpsi_q/dt * psi_p (dimensionless)
    mt: integral of psi_p^2            (units s)
    """

    kt: float
    ct: float
    dt: float
    mt: float


def time_coeffs(psi_q, psi_p, ops):
    """Evaluate the four scalar coefficients from sampled temporal modes.

    dt is evaluated directly as -psi_q @ C_t @ psi_p rather than through the
    shortcut ct - psi_q(T) psi_p(T), which drops the t=0 boundary term; the two
    coincide whenever psi_q(0) psi_p(0) = 0.
    """
    psi_q = np.asarray(psi_q, dtype=float)
    psi_p = np.asarray(psi_p, dtype=float)
    n = ops.grid.n_nodes
    if psi_q.shape != (n,) or psi_p.shape != (n,):
        raise ValueError(
            f"temporal samples must have shape ({n},), "
            f"got {psi_q.shape} and {psi_p.shape}"
        )
    kt = float(psi_q @ (ops.mass @ psi_q))
    mt = float(psi_p @ (ops.mass @ psi_p))
    ct = float(psi_p @ (ops.deriv @ psi_q))
    dt = -float(psi_q @ (ops.deriv @ psi_p))
    return TimeCoeffs(kt=kt, ct=ct, dt=dt, mt=mt)


def triangle_signal(t, t1, t2, amplitude):
    """Asymmetric triangular pull-then-push load signal.

    Ramps linearly up to `amplitude` on [0, t1), drops to -amplitude/2 at t1
    and relaxes linearly back to zero at t2, zero afterwards.
    """
    if not 0.0 < t1 < t2:
        raise ValueError(f"need 0 < t1 < t2, got t1={t1}, t2={t2}")
    t = np.asarray(t, dtype=float)
    up = (t / t1) * amplitude
    down = -0.5 * (1.0 - (t - t1) / (t2 - t1)) * amplitude
    out = np.where(t < t1, up, np.where(t < t2, down, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TriangleSignal:
    """Callable triangular signal with fixed break points (config-friendly)."""

    t1: float
    t2: float
    amplitude: float

    def __post_init__(self):
        if not 0.0 < self.t1 < self.t2:
            raise ValueError(f"need 0 < t1 < t2, got t1={self.t1}, t2={self.t2}")

    def __call__(self, t):
        return triangle_signal(t, self.t1, self.t2, self.amplitude)

    def integral(self):
        """Exact integral over (0, inf): F*t1/2 - F*(t2-t1)/4."""
        return 0.5 * self.amplitude * self.t1 - 0.25 * self.amplitude * (self.t2 - self.t1)
