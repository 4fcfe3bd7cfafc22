import numpy as np
import numpy.testing as npt
import pytest

from invlqr.numdiff import (cheb_eval_derivs, cheb_fit, fd_derivative,
                            simpson_weights, trapezoid_weights)


def test_fd_derivative_fourth_order_on_sin():
    N = 200
    h = 1.0 / N
    t = np.arange(N + 1) * h
    y = np.sin(3.0 * t)[:, None]
    dy = fd_derivative(y, h)
    npt.assert_allclose(dy[:, 0], 3.0 * np.cos(3.0 * t), atol=5e-9)


def test_fd_derivative_exact_on_cubic():
    # the 5-point stencils are exact for polynomials up to degree 4
    h = 0.05
    t = np.arange(21) * h
    y = (t ** 3 - 2 * t ** 2 + 4)[:, None]
    dy = fd_derivative(y, h)
    npt.assert_allclose(dy[:, 0], 3 * t ** 2 - 4 * t, atol=1e-11)


def test_fd_derivative_needs_five_samples():
    with pytest.raises(ValueError):
        fd_derivative(np.zeros((4, 1)), 0.1)


def test_cheb_fit_recovers_polynomial_derivatives():
    N = 400
    h = 1.0 / N
    t = np.arange(N + 1) * h
    y = (2 * t ** 4 - t ** 2 + 0.5 * t)[:, None]
    coef, span = cheb_fit(y, h)
    d = cheb_eval_derivs(coef, span, N + 1, 3, (1,))
    npt.assert_allclose(d[0][:, 0], 8 * t ** 3 - 2 * t + 0.5, atol=1e-9)
    npt.assert_allclose(d[1][:, 0], 24 * t ** 2 - 2, atol=1e-7)
    npt.assert_allclose(d[2][:, 0], 48 * t, atol=1e-5)


def test_cheb_fit_on_exponential():
    N = 1000
    h = 2.0 / N
    t = np.arange(N + 1) * h
    y = np.exp(-1.3 * t)[:, None]
    coef, span = cheb_fit(y, h)
    d = cheb_eval_derivs(coef, span, N + 1, 2, (1,))
    npt.assert_allclose(d[0][:, 0], -1.3 * np.exp(-1.3 * t), atol=1e-8)
    npt.assert_allclose(d[1][:, 0], 1.69 * np.exp(-1.3 * t), atol=1e-6)


def test_simpson_weights_integrate_cubics():
    for npts in (5, 9, 101):
        h = 1.0 / (npts - 1)
        w = simpson_weights(npts, h)
        t = np.arange(npts) * h
        for k in range(4):
            assert w @ t ** k == pytest.approx(1.0 / (k + 1), abs=1e-12)


def test_simpson_weights_odd_sample_count():
    # an even panel count is handled with a trapezoid closure on the last panel
    npts = 6
    h = 1.0 / (npts - 1)
    w = simpson_weights(npts, h)
    t = np.arange(npts) * h
    assert w @ np.ones(npts) == pytest.approx(1.0, abs=1e-12)
    assert w @ t == pytest.approx(0.5, abs=1e-3)


def test_trapezoid_weights():
    w = trapezoid_weights(5, 0.25)
    npt.assert_allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125])
