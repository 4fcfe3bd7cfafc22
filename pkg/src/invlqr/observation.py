"""From an observed gain trajectory to the derived quantities the solvers eat.

Given samples of the feedback gain K(t), this module checks the classical
necessary conditions for K to come from a symmetric kernel matrix, rebuilds
the kernel trajectory P0(t), and forms the defect matrix

    G(t) = P0' + A^T P0 + P0 A - P0 B B^T P0,

which is exactly zero when (and only when) P0 solves a Riccati equation with
zero running cost.  G is the data object of the inverse problem.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .matkit import sym, pinv, rank_tol, vec, smat, kron, duplication_matrix
from .numdiff import fd_derivative


@dataclass
class JamesonReport:
    """Outcome of the gain-realizability checks."""

    symmetric: bool
    rank_consistent: bool
    eigs_nonpositive: bool
    max_asymmetry: float
    max_eig: float
    worst_index: int

    @property
    def passed(self):
        return self.symmetric and self.rank_consistent and self.eigs_nonpositive


@dataclass
class DerivedObservation:
    """Gain samples plus the derived kernel and defect trajectories."""

    K: np.ndarray  # (N+1, m, n)
    P0: np.ndarray  # (N+1, n, n)
    G: np.ndarray  # (N+1, n, n)
    jameson: JamesonReport = field(repr=False)


def jameson_conditions(sys, K, tol=1e-7):
    """Check that K(t)B is symmetric, rank-matched with K, and NSD at every sample.

    These are necessary for K(t) = -B^T P(t) with symmetric P: then
    K B = -B^T P B, which is symmetric and negative semidefinite whenever P
    is PSD, and rank(KB) = rank(K) whenever P is invertible on range(B).
    """
    K = np.asarray(K, dtype=float)
    KB = K @ sys.B
    max_asym = 0.0
    max_eig = -np.inf
    rank_ok = True
    worst = 0
    for i in range(K.shape[0]):
        scale = 1.0 + float(np.abs(KB[i]).max())
        asym = float(np.abs(KB[i] - KB[i].T).max()) / scale
        if asym > max_asym:
            max_asym, worst = asym, i
        w = np.linalg.eigvalsh(sym(KB[i]))
        top = float(w[-1]) / scale
        if top > max_eig:
            max_eig = top
        if rank_tol(KB[i]) != rank_tol(K[i]):
            rank_ok = False
            worst = i
    return JamesonReport(
        symmetric=max_asym <= tol,
        rank_consistent=rank_ok,
        eigs_nonpositive=max_eig <= tol,
        max_asymmetry=max_asym,
        max_eig=max_eig,
        worst_index=worst,
    )


def compute_P0(sys, K):
    """Kernel trajectory P0 = -K^T (K B)^+ K, per sample.

    Requires rank(KB) = rank(K) at every sample; raises with the offending
    sample index otherwise, since the formula then no longer inverts
    K = -B^T P0.
    """
    K = np.asarray(K, dtype=float)
    KB = K @ sys.B
    N1 = K.shape[0]
    P0 = np.empty((N1, sys.n, sys.n))
    for i in range(N1):
        if rank_tol(KB[i]) != rank_tol(K[i]):
            raise ValueError(f"rank condition violated at sample {i}: "
                             f"rank(KB)={rank_tol(KB[i])} != rank(K)={rank_tol(K[i])}")
        P0[i] = sym(-K[i].T @ pinv(KB[i], rel_tol=1e-12) @ K[i])
    return P0


def p0_least_squares(sys, K):
    """Minimum-norm symmetric P0 with B^T P0 = -K, per sample.

    Solves the linear map (I kron B^T) D vech(P0) = -vec(K) by a fixed
    pseudoinverse.  Unlike `compute_P0` this needs no rank/symmetry
    precondition on K B, so it is the right kernel extractor for noisy gains;
    on clean data the two agree wherever both are defined.
    """
    K = np.asarray(K, dtype=float)
    n = sys.n
    J = kron(np.eye(n), sys.B.T) @ duplication_matrix(n)
    Jp = pinv(J, rel_tol=1e-12)
    N1 = K.shape[0]
    P0 = np.empty((N1, n, n))
    for i in range(N1):
        P0[i] = smat(Jp @ (-vec(K[i])), n)
    return P0


def compute_G(sys, P0, grid):
    """Defect G = P0' + A^T P0 + P0 A - P0 BB^T P0 with a 4th-order FD derivative."""
    P0 = np.asarray(P0, dtype=float)
    dP0 = fd_derivative(P0, grid.h)
    BBt = sys.B @ sys.B.T
    G = np.empty_like(P0)
    for i in range(P0.shape[0]):
        G[i] = sym(dP0[i] + sys.A.T @ P0[i] + P0[i] @ sys.A - P0[i] @ BBt @ P0[i])
    return G


def derive_observation(sys, K, grid, tol=1e-7):
    """Bundle Jameson checks, P0 and G for a gain trajectory.

    Warns (rather than fails) when the realizability checks do not pass:
    the caller decides whether to continue on the exact path or fall back to
    the approximate one.
    """
    rep = jameson_conditions(sys, K, tol=tol)
    if not rep.passed:
        warnings.warn("gain realizability checks failed; exact-path output is unreliable",
                      stacklevel=2)
    P0 = compute_P0(sys, K)
    G = compute_G(sys, P0, grid)
    return DerivedObservation(K=np.asarray(K, dtype=float), P0=P0, G=G, jameson=rep)


def add_noise(K, snr_db, seed=None):
    """Additive white Gaussian noise at a prescribed signal-to-noise ratio.

    sigma^2 = mean(K^2) * 10^(-snr_db/10); snr_db=None or inf returns a copy.
    Returns (noisy K, sigma).
    """
    K = np.asarray(K, dtype=float)
    if snr_db is None or np.isinf(snr_db):
        return K.copy(), 0.0
    rng = np.random.default_rng(seed)
    sigma = float(np.sqrt(np.mean(K ** 2) * 10.0 ** (-snr_db / 10.0)))
    return K + sigma * rng.standard_normal(K.shape), sigma
