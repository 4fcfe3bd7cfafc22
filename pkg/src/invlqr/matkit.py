"""Dense matrix kernels: vectorization, duplication/elimination, PSD tests.

Everything here is small and dense (n <= 10 in practice); heavy lifting is
delegated to numpy/scipy LAPACK wrappers.
"""

import numpy as np
import scipy.linalg


def sym(M):
    """Symmetric part (M + M^T)/2."""
    return 0.5 * (M + M.T)


def vec(M):
    """Column-stacking vectorization."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, n=None):
    """Inverse of vec for a square matrix."""
    v = np.asarray(v)
    if n is None:
        n = int(round(np.sqrt(v.size)))
    return v.reshape(n, n, order="F")


def vech(M):
    """Half-vectorization: lower triangle stacked column by column."""
    M = np.asarray(M)
    n = M.shape[0]
    return np.concatenate([M[j:, j] for j in range(n)])


def duplication_matrix(n):
    """D with D @ vech(X) = vec(X) for symmetric X."""
    p = n * (n + 1) // 2
    D = np.zeros((n * n, p))
    k = 0
    for j in range(n):
        for i in range(j, n):
            D[i + j * n, k] = 1.0
            if i != j:
                D[j + i * n, k] = 1.0
            k += 1
    return D


def elimination_matrix(n):
    """L with L @ vec(X) = vech(X); satisfies L @ D = I."""
    p = n * (n + 1) // 2
    L = np.zeros((p, n * n))
    k = 0
    for j in range(n):
        for i in range(j, n):
            L[k, i + j * n] = 1.0
            k += 1
    return L


def smat(v, n=None):
    """Inverse of vech: symmetric matrix from its lower-triangle stack."""
    v = np.asarray(v)
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    return unvec(duplication_matrix(n) @ v, n)


def kron(A, B):
    """Kronecker product (thin alias, kept for a single call-site vocabulary)."""
    return np.kron(A, B)


def pinv(A, rel_tol=1e-10):
    """Moore-Penrose pseudoinverse with singular values below rel_tol*sigma_max dropped."""
    return np.linalg.pinv(A, rcond=rel_tol)


def expm(A):
    """Matrix exponential (scaling-and-squaring via scipy)."""
    return scipy.linalg.expm(np.asarray(A, dtype=float))


def min_eig_sym(M):
    """Smallest eigenvalue of the symmetric part."""
    return float(np.linalg.eigvalsh(sym(np.asarray(M, dtype=float)))[0])


def is_psd(M, tol=1e-9):
    """PSD test with a tolerance relative to the spectral scale."""
    w = np.linalg.eigvalsh(sym(np.asarray(M, dtype=float)))
    scale = 1.0 + float(np.max(np.abs(w))) if w.size else 1.0
    return bool(w.size == 0 or w[0] >= -tol * scale)


def rank_tol(A, tol=1e-8):
    """Numerical rank: count of singular values above tol*sigma_max."""
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
