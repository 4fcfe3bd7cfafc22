"""A single conic-solver doorway for every semidefinite subproblem in the package.

The problems are all tiny (variable dimension below ~100, PSD blocks of order
at most ~15), so one dense interior-point backend suffices.  We wrap CLARABEL
through cvxpy with tightened tolerances: several callers sit on flat optimal
faces where the default gap tolerance leaves 1e-4-scale wobble in the
minimizer, which is too loose for the cross-validation contracts downstream.
"""

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .matkit import sym, min_eig_sym

# Interior-point settings shared by every solve (determinism + tight faces).
_SOLVER_OPTS = dict(tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11, max_iter=200)

_SLACK_CAP = 1.0e6


@dataclass
class ConicProblem:
    """min x'Hx + f'x + g  s.t.  E x = h,  each affine map M0 + sum_j x_j Mj is PSD.

    H may be None (linear objective) or symmetric-indefinite at roundoff
    scale; it is eigenvalue-clipped to the PSD cone before the solve and the
    clip magnitude is surfaced as a diagnostic.
    """

    d: int
    f: np.ndarray
    g: float = 0.0
    H: np.ndarray | None = None
    E: np.ndarray | None = None
    h: np.ndarray | None = None
    psd_maps: list = field(default_factory=list)  # [(M0, [M1..Md])]


@dataclass
class ConicSolution:
    x: np.ndarray | None
    objective: float
    status: str  # optimal | inaccurate | infeasible | failed
    max_violation: float
    diagnostics: dict = field(default_factory=dict)


def _clip_psd(H):
    w, V = np.linalg.eigh(sym(H))
    clipped = float(max(0.0, -w.min()))
    Hp = sym((V * np.clip(w, 0.0, None)) @ V.T)
    return Hp, clipped


def _affine_expr(x, M0, Ms):
    k = M0.shape[0]
    cols = np.stack([m.reshape(-1, order="F") for m in Ms], axis=1)
    e = cp.reshape(cols @ x, (k, k), order="F") + M0
    return 0.5 * (e + e.T)


def _violation(p, x):
    viol = 0.0
    for M0, Ms in p.psd_maps:
        Mx = M0 + sum(xj * Mj for xj, Mj in zip(x, Ms))
        viol = max(viol, -min(0.0, min_eig_sym(Mx)))
    if p.E is not None:
        viol = max(viol, float(np.abs(p.E @ x - p.h).max(initial=0.0)))
    return viol


def solve(p: ConicProblem) -> ConicSolution:
    """Solve a ConicProblem; statuses degrade honestly rather than raise."""
    x = cp.Variable(p.d)
    diagnostics = {}
    if p.H is not None:
        Hp, clipped = _clip_psd(p.H)
        diagnostics["H_clip"] = clipped
        objective = cp.quad_form(x, cp.psd_wrap(Hp)) + p.f @ x + p.g
    else:
        objective = p.f @ x + p.g
    cons = []
    if p.E is not None:
        cons.append(p.E @ x == p.h)
    for M0, Ms in p.psd_maps:
        cons.append(_affine_expr(x, np.asarray(M0, dtype=float), Ms) >> 0)
    prob = cp.Problem(cp.Minimize(objective), cons)
    try:
        with warnings.catch_warnings():
            # accuracy is re-checked below against the violation contract
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL, **_SOLVER_OPTS)
    except Exception as errv:  # numerical breakdown inside the solver
        return ConicSolution(None, np.nan, "failed", np.inf,
                             {"error": str(errv), **diagnostics})
    status = {
        "optimal": "optimal",
        "optimal_inaccurate": "inaccurate",
        "infeasible": "infeasible",
        "infeasible_inaccurate": "infeasible",
    }.get(prob.status, "failed")
    if x.value is None:
        return ConicSolution(None, np.nan, status, np.inf, diagnostics)
    xv = np.asarray(x.value, dtype=float)
    viol = _violation(p, xv)
    if status == "optimal" and viol > 1e-7 * (1.0 + float(np.linalg.norm(xv))):
        status = "inaccurate"
    return ConicSolution(xv, float(prob.value), status, viol, diagnostics)


def max_slack_feasibility(psd_maps, d):
    """max t such that every map(x) - t I is PSD; feasible iff t* >= -1e-7.

    The slack is capped at 1e6 so jointly unconstrained map families return a
    finite certificate with a diagnostic instead of an unbounded status.
    Returns (t*, x*, ConicSolution).
    """
    if not psd_maps:
        raise ValueError("need at least one PSD map")
    maps_aug = []
    for M0, Ms in psd_maps:
        k = np.asarray(M0).shape[0]
        maps_aug.append((np.asarray(M0, dtype=float),
                         [np.asarray(M, dtype=float) for M in Ms] + [-np.eye(k)]))
    # cap: 1e6 - t >= 0 as a 1x1 block
    maps_aug.append((np.array([[_SLACK_CAP]]),
                     [np.zeros((1, 1))] * d + [np.array([[-1.0]])]))
    f = np.zeros(d + 1)
    f[-1] = -1.0  # maximize t
    sol = solve(ConicProblem(d=d + 1, f=f, psd_maps=maps_aug))
    if sol.x is None:
        return -np.inf, None, sol
    tstar = float(sol.x[-1])
    if tstar >= _SLACK_CAP * (1.0 - 1e-6):
        sol.diagnostics["slack_capped"] = True
    return tstar, sol.x[:-1], sol
