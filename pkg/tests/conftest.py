"""Shared generators for the test suite."""

import numpy as np

from invlqr import QuadraticCost, StateSpaceSystem, TimeGrid, solve_dre


def tame_system(rng, n, m):
    """Random controllable plant scaled so horizon-1 dynamics stay mild."""
    while True:
        A = rng.standard_normal((n, n))
        A = 0.9 * A / np.linalg.norm(A, 2)
        B = rng.standard_normal((n, m))
        B = B / max(1.0, np.linalg.norm(B, 2))
        sys = StateSpaceSystem(A=A, B=B)
        if sys.controllability_rank() == n:
            return sys


def random_psd(rng, n, lo=0.4, hi=1.2):
    """Random symmetric matrix with eigenvalues in [lo, hi]."""
    M = rng.standard_normal((n, n))
    Qo, _ = np.linalg.qr(M)
    w = rng.uniform(lo, hi, n)
    return (Qo * w) @ Qo.T


def roundtrip_gains(rng, n, m, T=1.0, N=1000):
    """Forward-solve a random problem; returns (sys, Q, F, grid, K)."""
    sys = tame_system(rng, n, m)
    Q = random_psd(rng, n)
    F = random_psd(rng, n)
    grid = TimeGrid(T=T, N=N)
    sol = solve_dre(sys, QuadraticCost(Q=Q, F=F, T=T), grid)
    return sys, Q, F, grid, sol.K


def uncontrollable_system(rng, n, m):
    """Plant whose controllable subspace misses the last coordinate."""
    k = n - 1
    A = np.zeros((n, n))
    A[:k, :k] = rng.standard_normal((k, k))
    A[:k, :k] = 0.9 * A[:k, :k] / max(np.linalg.norm(A[:k, :k], 2), 1e-9)
    A[n - 1, n - 1] = rng.uniform(-1.0, 1.0)
    B = np.zeros((n, m))
    B[:k, :] = rng.standard_normal((k, m))
    return StateSpaceSystem(A=A, B=B)
