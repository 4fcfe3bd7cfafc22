"""Numerical differentiation and quadrature for uniformly sampled matrix series.

Two engines live here.  `fd_derivative` is a classical 4th-order stencil
(central in the interior, one-sided at the two samples next to each end); it
is cheap and local, and fine for a single derivative of smooth data.  For
repeated differentiation the one-sided boundary stencils amplify the data's
noise floor multiplicatively, so higher derivatives instead come from a
global Chebyshev least-squares fit differentiated analytically
(`cheb_fit` / `cheb_eval_derivs`): the fit sees the whole record, the first
and last couple of samples (where upstream stencils are least accurate) are
excluded from the regression, and the coefficient tail is truncated at the
relative noise floor so differentiation does not amplify fitted junk.
"""

import numpy as np
from numpy.polynomial import chebyshev as _cheb

# 4th-order one-sided endpoint stencils (first derivative, uniform grid)
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def fd_derivative(Y, h):
    """4th-order finite-difference d/dt along axis 0 of a uniform series."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] < 5:
        raise ValueError("need at least 5 samples for the 4th-order stencil")
    d = np.empty_like(Y)
    d[2:-2] = (Y[:-4] - 8 * Y[1:-3] + 8 * Y[3:-1] - Y[4:]) / (12.0 * h)
    d[0] = np.tensordot(_EDGE0, Y[:5], axes=(0, 0)) / h
    d[1] = np.tensordot(_EDGE1, Y[:5], axes=(0, 0)) / h
    d[-1] = -np.tensordot(_EDGE0, Y[-5:][::-1], axes=(0, 0)) / h
    d[-2] = -np.tensordot(_EDGE1, Y[-5:][::-1], axes=(0, 0)) / h
    return d


def cheb_fit(Y, h, max_degree=80, skip_ends=2, floor_rel=1e-12):
    """Least-squares Chebyshev fit of a smooth uniformly sampled series.

    Y has shape (N+1, ...); the fit is per trailing component over the
    interval [0, h*N] mapped to [-1, 1].  Returns (coef, span) where coef is
    (deg+1, ncomp) and span is the interval length (needed to scale
    derivatives).  The degree caps at min(max_degree, N//8); trailing
    coefficients whose running tail maximum falls below floor_rel times the
    largest coefficient are dropped.
    """
    Y = np.asarray(Y, dtype=float)
    N1 = Y.shape[0]
    span = h * (N1 - 1)
    x = 2.0 * np.arange(N1) / (N1 - 1) - 1.0
    deg = int(min(max_degree, (N1 - 1) // 8))
    if deg < 3:
        deg = min(3, N1 - 1)
    V = _cheb.chebvander(x, deg)
    sl = slice(skip_ends, N1 - skip_ends) if skip_ends else slice(None)
    coef, *_ = np.linalg.lstsq(V[sl], Y.reshape(N1, -1)[sl], rcond=None)
    mags = np.linalg.norm(coef, axis=1)
    top = float(mags.max()) if mags.size else 0.0
    keep = deg + 1
    if top > 0.0:
        tailmax = np.maximum.accumulate(mags[::-1])[::-1]
        for j in range(deg + 1):
            if tailmax[j] <= top * floor_rel:
                keep = max(j, 3)
                break
    return coef[:keep], span


def cheb_eval_derivs(coef, span, N1, dmax, shape=()):
    """Evaluate derivatives 1..dmax of a Chebyshev fit back on the sample grid.

    Returns a list of dmax arrays shaped (N1,) + shape.
    """
    x = 2.0 * np.arange(N1) / (N1 - 1) - 1.0
    out = []
    cd = coef
    for _ in range(dmax):
        cd = _cheb.chebder(cd, 1, scl=2.0 / span)
        vals = _cheb.chebvander(x, cd.shape[0] - 1) @ cd
        out.append(vals.reshape((N1,) + tuple(shape)))
    return out


def simpson_weights(npts, h):
    """Composite Simpson quadrature weights on a uniform grid.

    For an even panel count the last panel is closed with a trapezoid rule so
    any npts >= 2 is accepted.
    """
    if npts < 2:
        raise ValueError("need at least two samples to integrate")
    w = np.zeros(npts)
    if npts < 3:
        w[:] = h / 2.0
        return w
    if npts % 2 == 0:
        w[: npts - 1] = simpson_weights(npts - 1, h)
        w[-2] += h / 2.0
        w[-1] += h / 2.0
        return w
    w[0] = w[-1] = h / 3.0
    w[1:-1:2] = 4.0 * h / 3.0
    w[2:-1:2] = 2.0 * h / 3.0
    return w


def trapezoid_weights(npts, h):
    """Composite trapezoid quadrature weights on a uniform grid."""
    w = np.full(npts, h)
    w[0] = w[-1] = h / 2.0
    return w
