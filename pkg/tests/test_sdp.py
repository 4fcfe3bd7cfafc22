import numpy as np
import numpy.testing as npt
import pytest

from invlqr.matkit import duplication_matrix, vec, vech
from invlqr.sdp import (ConicProblem, ConicSolution, max_slack_feasibility,
                        solve)


def test_min_x_subject_to_nonnegativity():
    # min x s.t. x >= 0 (as a 1x1 PSD block)
    p = ConicProblem(d=1, f=np.array([1.0]),
                     psd_maps=[(np.zeros((1, 1)), [np.ones((1, 1))])])
    sol = solve(p)
    assert sol.status in ("optimal", "inaccurate")
    assert sol.objective == pytest.approx(0.0, abs=1e-8)
    assert sol.x[0] == pytest.approx(0.0, abs=1e-7)


def test_min_alpha_dominating_diag():
    # min a s.t. a I >= diag(1, 3)  =>  a = 3
    M0 = -np.diag([1.0, 3.0])
    p = ConicProblem(d=1, f=np.array([1.0]), psd_maps=[(M0, [np.eye(2)])])
    sol = solve(p)
    assert sol.objective == pytest.approx(3.0, abs=1e-7)


def test_quadratic_objective():
    # min (x - 3)^2 s.t. x >= 0
    p = ConicProblem(d=1, H=np.array([[1.0]]), f=np.array([-6.0]), g=9.0,
                     psd_maps=[(np.zeros((1, 1)), [np.ones((1, 1))])])
    sol = solve(p)
    assert sol.x[0] == pytest.approx(3.0, abs=1e-6)
    assert sol.objective == pytest.approx(0.0, abs=1e-7)


def test_equality_constraints():
    # min |x|^2 s.t. x1 + x2 = 2
    p = ConicProblem(d=2, H=np.eye(2), f=np.zeros(2),
                     E=np.array([[1.0, 1.0]]), h=np.array([2.0]))
    sol = solve(p)
    npt.assert_allclose(sol.x, [1.0, 1.0], atol=1e-7)


def test_psd_projection_matches_eigenvalue_clipping():
    # min |X - G|_F^2 over X >= 0 has the closed form: clip eigenvalues at 0
    rng = np.random.default_rng(6)
    G = rng.standard_normal((3, 3))
    G = 0.5 * (G + G.T)
    n = 3
    D = duplication_matrix(n)
    W = D.T @ D
    p = n * (n + 1) // 2
    maps = [(np.zeros((n, n)),
             [np.array([[1.0 if (i, j) in ((a, b), (b, a)) else 0.0
                         for j in range(n)] for i in range(n)])
              for b in range(n) for a in range(b, n)])]
    prob = ConicProblem(d=p, H=W, f=-2.0 * (D.T @ vec(G)),
                        g=float(vec(G) @ vec(G)), psd_maps=maps)
    sol = solve(prob)
    w, V = np.linalg.eigh(G)
    Xref = (V * np.clip(w, 0.0, None)) @ V.T
    npt.assert_allclose(sol.x, vech(Xref), atol=1e-6)
    assert sol.objective == pytest.approx(float(np.sum(np.clip(w, None, 0.0) ** 2)),
                                          abs=1e-6)


def test_indefinite_objective_is_clipped_with_diagnostic():
    H = np.diag([1.0, -1e-13])
    p = ConicProblem(d=2, H=H, f=np.zeros(2),
                     E=np.eye(2), h=np.array([1.0, 1.0]))
    sol = solve(p)
    assert sol.diagnostics["H_clip"] > 0
    assert sol.x is not None


def test_violation_contract():
    M0 = -np.diag([1.0, 3.0])
    sol = solve(ConicProblem(d=1, f=np.array([1.0]),
                             psd_maps=[(M0, [np.eye(2)])]))
    assert sol.max_violation <= 1e-7 * (1.0 + np.linalg.norm(sol.x))


def test_infeasible_pair_slack():
    # x >= 1 together with x <= -1: best joint slack is -1
    maps = [(np.array([[-1.0]]), [np.array([[1.0]])]),
            (np.array([[-1.0]]), [np.array([[-1.0]])])]
    tstar, xstar, sol = max_slack_feasibility(maps, d=1)
    assert tstar == pytest.approx(-1.0, abs=1e-6)
    assert tstar < -1e-7  # infeasible verdict


def test_feasible_pair_slack_positive():
    # x >= 1 and x <= 3 admit x = 2 with slack 1
    maps = [(np.array([[-1.0]]), [np.array([[1.0]])]),
            (np.array([[3.0]]), [np.array([[-1.0]])])]
    tstar, xstar, sol = max_slack_feasibility(maps, d=1)
    assert tstar == pytest.approx(1.0, abs=1e-6)


def test_unbounded_slack_hits_cap():
    # x >= 0 alone: slack grows with x, so the cap engages
    maps = [(np.zeros((1, 1)), [np.ones((1, 1))])]
    tstar, xstar, sol = max_slack_feasibility(maps, d=1)
    assert sol.diagnostics.get("slack_capped", False)
    assert tstar > 1e5


def test_solver_failure_reported_not_raised():
    # infeasible *optimization* must come back as a status, not an exception
    maps = [(np.array([[-1.0]]), [np.array([[1.0]])]),
            (np.array([[-1.0]]), [np.array([[-1.0]])])]
    sol = solve(ConicProblem(d=1, f=np.array([1.0]), psd_maps=maps))
    assert isinstance(sol, ConicSolution)
    assert sol.status in ("infeasible", "failed")
    assert sol.x is None
