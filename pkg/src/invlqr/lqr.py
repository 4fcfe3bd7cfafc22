"""Forward finite-horizon LQ machinery.

Solves the matrix differential Riccati equation backward in time on a uniform
grid, extracts the optimal feedback gain, and simulates the closed loop.  The
forward path is both a data generator for the inverse problem and the oracle
used to score recovered cost matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from .matkit import sym, is_psd


@dataclass(frozen=True)
class StateSpaceSystem:
    """Pair (A, B) of constant dynamics and input matrices."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.shape[0] != A.shape[0]:
            raise ValueError("B row count must match A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def controllability_rank(self, tol=1e-8):
        blocks = [self.B]
        for _ in range(self.n - 1):
            blocks.append(self.A @ blocks[-1])
        s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
        return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


@dataclass(frozen=True)
class QuadraticCost:
    """Running weight Q, terminal weight F, horizon T."""

    Q: np.ndarray
    F: np.ndarray
    T: float

    def __post_init__(self):
        Q = sym(np.atleast_2d(np.asarray(self.Q, dtype=float)))
        F = sym(np.atleast_2d(np.asarray(self.F, dtype=float)))
        if Q.shape != F.shape or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q and F must be square and of equal size")
        if not (self.T > 0):
            raise ValueError("horizon T must be positive")
        if not is_psd(Q, tol=1e-7):
            raise ValueError("Q must be positive semidefinite")
        if not is_psd(F, tol=1e-7):
            raise ValueError("F must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "F", F)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of N steps (N+1 samples) on [0, T]."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0):
            raise ValueError("T must be positive")
        if self.N < 2:
            raise ValueError("need at least two steps")

    @property
    def h(self):
        return self.T / self.N

    @property
    def t(self):
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class RiccatiSolution:
    """Sampled solution P(t) of the Riccati ODE and the induced gain K(t)."""

    P: np.ndarray  # (N+1, n, n)
    K: np.ndarray  # (N+1, m, n)
    grid: TimeGrid = field(repr=False)


def _dre_rhs(P, A, BBt, Q):
    # dP/dt = -(PA + A'P - P BB' P + Q)
    return -(P @ A + A.T @ P - P @ BBt @ P + Q)


def solve_dre(sys, cost, grid):
    """Integrate the Riccati equation backward from P(T) = F with RK4.

    Each accepted step is re-symmetrized; the equation preserves symmetry
    exactly but the integrator only to roundoff, and downstream algebra
    assumes symmetric samples.
    """
    if cost.Q.shape[0] != sys.n:
        raise ValueError("cost dimension does not match the system")
    A, BBt = sys.A, sys.B @ sys.B.T
    h = grid.h
    P = np.empty((grid.N + 1, sys.n, sys.n))
    P[grid.N] = cost.F
    for i in range(grid.N, 0, -1):
        Pi = P[i]
        k1 = _dre_rhs(Pi, A, BBt, cost.Q)
        k2 = _dre_rhs(Pi - 0.5 * h * k1, A, BBt, cost.Q)
        k3 = _dre_rhs(Pi - 0.5 * h * k2, A, BBt, cost.Q)
        k4 = _dre_rhs(Pi - h * k3, A, BBt, cost.Q)
        P[i - 1] = sym(Pi - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    K = feedback_from_P(sys, P)
    return RiccatiSolution(P=P, K=K, grid=grid)


def feedback_from_P(sys, P):
    """Optimal gain K = -B^T P, batched over the leading sample axis."""
    P = np.asarray(P)
    if P.ndim == 2:
        return -sys.B.T @ P
    return -np.einsum("ij,tjk->tik", sys.B.T, P)


def simulate_closed_loop(sys, K, grid, x0):
    """RK4 simulation of xdot = (A + B K(t)) x with K linearly interpolated.

    K is sampled on the grid; midpoint stage evaluations use the average of
    the bracketing samples.  Returns the (N+1, n) state trajectory.
    """
    K = np.asarray(K, dtype=float)
    if K.shape[0] != grid.N + 1:
        raise ValueError("gain sample count does not match the grid")
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != sys.n:
        raise ValueError("x0 dimension does not match the system")
    h = grid.h
    A, B = sys.A, sys.B
    out = np.empty((grid.N + 1, sys.n))
    out[0] = x
    for i in range(grid.N):
        Ki, Kj = K[i], K[i + 1]
        Km = 0.5 * (Ki + Kj)
        k1 = (A + B @ Ki) @ x
        k2 = (A + B @ Km) @ (x + 0.5 * h * k1)
        k3 = (A + B @ Km) @ (x + 0.5 * h * k2)
        k4 = (A + B @ Kj) @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = x
    return out
