import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import solve_ivp

from conftest import random_psd, tame_system
from invlqr import (QuadraticCost, StateSpaceSystem, TimeGrid,
                    feedback_from_P, simulate_closed_loop, solve_dre)


def test_scalar_riccati_analytic():
    # a=0, b=1, Q=0, F=1: -P' = -P^2, P(T)=1  =>  P(t) = 1/(1 + T - t)
    sys = StateSpaceSystem(A=np.zeros((1, 1)), B=np.ones((1, 1)))
    cost = QuadraticCost(Q=np.zeros((1, 1)), F=np.ones((1, 1)), T=1.0)
    grid = TimeGrid(T=1.0, N=1000)
    sol = solve_dre(sys, cost, grid)
    assert sol.P[0, 0, 0] == pytest.approx(0.5, abs=1e-10)
    npt.assert_allclose(sol.P[:, 0, 0], 1.0 / (2.0 - grid.t), atol=1e-10)
    npt.assert_allclose(sol.K[:, 0, 0], -1.0 / (2.0 - grid.t), atol=1e-10)


def test_dre_matches_independent_integrator():
    rng = np.random.default_rng(5)
    sys = tame_system(rng, 3, 2)
    Q = random_psd(rng, 3)
    F = random_psd(rng, 3)
    grid = TimeGrid(T=1.0, N=1000)
    sol = solve_dre(sys, QuadraticCost(Q=Q, F=F, T=1.0), grid)

    def rhs(t, p):
        P = p.reshape(3, 3)
        dP = -(P @ sys.A + sys.A.T @ P - P @ sys.B @ sys.B.T @ P + Q)
        return dP.reshape(-1)

    ivp = solve_ivp(rhs, (1.0, 0.0), F.reshape(-1), rtol=1e-12, atol=1e-12,
                    dense_output=True)
    P0_ref = ivp.y[:, -1].reshape(3, 3)
    npt.assert_allclose(sol.P[0], P0_ref, atol=1e-8)


def test_dre_solution_symmetric_and_grid_converged():
    rng = np.random.default_rng(9)
    sys = tame_system(rng, 4, 1)
    Q = random_psd(rng, 4)
    F = random_psd(rng, 4)
    coarse = solve_dre(sys, QuadraticCost(Q=Q, F=F, T=1.0), TimeGrid(1.0, 500))
    fine = solve_dre(sys, QuadraticCost(Q=Q, F=F, T=1.0), TimeGrid(1.0, 1000))
    asym = max(np.abs(P - P.T).max() for P in fine.P)
    assert asym == 0.0  # re-symmetrized every step
    npt.assert_allclose(coarse.P[0], fine.P[0], atol=1e-10)


def test_feedback_from_P_shapes():
    rng = np.random.default_rng(2)
    sys = tame_system(rng, 3, 2)
    P = np.stack([random_psd(rng, 3) for _ in range(4)])
    K = feedback_from_P(sys, P)
    assert K.shape == (4, 2, 3)
    npt.assert_allclose(K[1], -sys.B.T @ P[1], atol=0)
    # 2-D input passes through
    npt.assert_allclose(feedback_from_P(sys, P[0]), -sys.B.T @ P[0], atol=0)


def test_simulate_closed_loop_scalar_analytic():
    # x' = (a + b*k) x with constant k: x(t) = x0 exp((a + b k) t)
    sys = StateSpaceSystem(A=np.array([[0.3]]), B=np.array([[1.0]]))
    grid = TimeGrid(T=1.0, N=800)
    K = np.full((grid.N + 1, 1, 1), -1.1)
    X = simulate_closed_loop(sys, K, grid, np.array([2.0]))
    npt.assert_allclose(X[:, 0], 2.0 * np.exp(-0.8 * grid.t), atol=1e-9)


def test_input_validation():
    with pytest.raises(ValueError):
        StateSpaceSystem(A=np.zeros((2, 3)), B=np.zeros((2, 1)))
    with pytest.raises(ValueError):
        StateSpaceSystem(A=np.zeros((2, 2)), B=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        QuadraticCost(Q=-np.eye(2), F=np.eye(2), T=1.0)
    with pytest.raises(ValueError):
        QuadraticCost(Q=np.eye(2), F=np.eye(2), T=0.0)
    with pytest.raises(ValueError):
        TimeGrid(T=1.0, N=1)


def test_controllability_rank():
    sys = StateSpaceSystem(A=np.diag([1.0, 2.0]), B=np.array([[1.0], [0.0]]))
    assert sys.controllability_rank() == 1
    sys2 = StateSpaceSystem(A=np.array([[0.0, 1.0], [0.0, 0.0]]),
                            B=np.array([[0.0], [1.0]]))
    assert sys2.controllability_rank() == 2
