"""Exact inverse path: decide existence of constant cost matrices and enumerate them.

Pipeline sketch.  Vectorizing the closed-loop kernel identity turns the
unknown running cost Q into the solution of a time-invariant linear system:
with At = -(I kron A + A kron I) and Bt = I kron B, the stacked maps
W_k = Bt^T (At^T)^k observe vec(Y(t)) through W_k y = (data), where
Y = P - P0.  Selecting n^2 independent rows H (mandatory: the first n*m,
which carry no differentiated data) gives

    A_Q vec(Q) = B_Q(t),   A_Q = H At' H^-1 N + H,

and B_Q(t) must be constant in t exactly when some constant (Q, F) explains
the observed gain.  The pair (Q, Y) then solves one square symmetric linear
system whose null space is the solution-space tangent; its dimension is
r = (n-m)(n-m+1)/2 for controllable (A, B).  Terminal weights come from
propagating Y to the horizon: F = P0(T) + Y(T).

Numerical layout choices that matter (all validated on roundtrips):
B_Q enters the linear system through its time average in telescoped form, so
only G itself is quadratured and higher derivatives appear as interior
endpoint evaluations; the right-hand side is anchored at an interior sample
rather than t = T, where one-sided differentiation is least accurate; and
derivatives of G come from a truncated global Chebyshev fit rather than
repeated stencils.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .matkit import (duplication_matrix, is_psd, kron, min_eig_sym, rank_tol,
                     smat, sym, unvec, vec, vech)
from .numdiff import cheb_eval_derivs, cheb_fit, simpson_weights
from .observation import derive_observation


# ---------------------------------------------------------------------------
# structural solution-space geometry


def solution_space_structure(sys):
    """Tangent directions of the solution space from the input-null geometry.

    Kernel shifts dP with B^T dP = 0 leave the gain untouched; writing
    dP = V2 X V2^T over an orthonormal basis V2 of ker(B^T) and pushing dP
    through the Riccati equation shifts the running cost by
    dQ = -(A^T dP + dP A) and the terminal weight by dF = dP.  Returns
    (r, [(dQ_i, dF_i)]) with r = (n-m)(n-m+1)/2 directions (m = rank B).
    """
    n = sys.n
    _, s, Vt = np.linalg.svd(sys.B.T)
    rb = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    V2 = Vt[rb:].T  # (n, n-rb), orthonormal basis of ker(B^T)
    k = V2.shape[1]
    basis = []
    for i in range(k):
        for j in range(i, k):
            X = np.zeros((k, k))
            X[i, j] = X[j, i] = 1.0
            dP = V2 @ X @ V2.T
            basis.append((-sym(sys.A.T @ dP + dP @ sys.A), dP))
    # normalize each direction by the Frobenius norm of its (dQ, dF) pair
    out = []
    for dQ, dP in basis:
        nrm = np.sqrt(np.sum(dQ * dQ) + np.sum(dP * dP))
        out.append((dQ / nrm, dP / nrm))
    return len(out), out


# ---------------------------------------------------------------------------
# vectorized data system


@dataclass
class VectorizedSystem:
    """Time-invariant maps plus the sampled data entering the linear solve."""

    n: int
    m: int
    grid: object = field(repr=False)
    P0: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    At: np.ndarray = field(repr=False)
    W: list = field(repr=False)
    H: np.ndarray = field(repr=False)
    Nmat: np.ndarray = field(repr=False)
    rows: list = field(repr=False)
    Hb: np.ndarray = field(repr=False)
    Nb: np.ndarray = field(repr=False)
    Hinv: np.ndarray = field(repr=False)
    M1: np.ndarray = field(repr=False)  # Hb At' Hb^-1
    vecG: np.ndarray = field(repr=False)  # (N+1, n^2)
    derivs: list = field(repr=False)  # [vecG, vecG', ..., vecG^(n-2)]
    fbar: np.ndarray = field(repr=False)  # (N+1, n^2), selected rows
    fdot: np.ndarray = field(repr=False)
    i1: int = 0
    i2: int = 0


def structure_matrices(sys):
    """At, Bt, the observation stack W_k, H = vstack(W), and the shift stack N."""
    n, m = sys.n, sys.m
    At = -(kron(np.eye(n), sys.A) + kron(sys.A, np.eye(n)))
    Bt = kron(np.eye(n), sys.B)
    W = [Bt.T]
    for _ in range(1, n):
        W.append(W[-1] @ At.T)
    H = np.vstack(W)
    Nmat = np.vstack([np.zeros((n * m, n * n))] + [-W[k] for k in range(n - 1)])
    return At, W, H, Nmat


def select_rows(H, nm, n2):
    """Choose n^2 independent rows of H, preferring low derivative order.

    The first nm rows observe Y directly (no differentiated data) and are
    always kept.  Remaining rank is completed block by block -- a block's
    index equals the derivative order of the data feeding it, so lower blocks
    are strictly preferred -- taking within each block the row with the
    largest normalized projection residual onto the span selected so far.
    """
    rows = list(range(nm))
    Qb, _ = np.linalg.qr(np.array(H[rows]).T)
    nblocks = H.shape[0] // nm
    for k in range(1, nblocks):
        if len(rows) == n2:
            break
        block = list(range(k * nm, (k + 1) * nm))
        while len(rows) < n2 and block:
            R = H[block] - (H[block] @ Qb) @ Qb.T
            norms = np.linalg.norm(R, axis=1) / np.maximum(
                np.linalg.norm(H[block], axis=1), 1e-300)
            j = int(np.argmax(norms))
            if norms[j] < 1e-9:
                break
            rows.append(block[j])
            block.pop(j)
            Qb, _ = np.linalg.qr(np.array(H[rows]).T)
    if len(rows) < n2:
        raise ValueError("H is column-rank deficient; (A, B) is not controllable")
    rows.sort()
    return rows


def build_vectorized_system(sys, obs, grid):
    """Assemble the time-invariant maps and the sampled series f(t), f'(t).

    Raises when H is column-rank deficient (uncontrollable pair).  Derivatives
    of G of order 1..n-2 and the derivative of f come from a global Chebyshev
    fit of the sampled series (see module docstring).
    """
    n, m = sys.n, sys.m
    nm, n2 = n * m, n * n
    At, W, H, Nmat = structure_matrices(sys)
    if rank_tol(H, tol=1e-8) < n2:
        raise ValueError("H is column-rank deficient; (A, B) is not controllable")
    rows = select_rows(H, nm, n2)
    Hb, Nb = H[rows], Nmat[rows]
    Hinv = np.linalg.inv(Hb)
    M1 = Hb @ At.T @ Hinv
    N1 = grid.N + 1
    vecG = np.stack([vec(obs.G[i]) for i in range(N1)])
    dmax = max(n - 2, 0)
    if dmax > 0:
        coefG, span = cheb_fit(vecG, grid.h)
        dG = cheb_eval_derivs(coefG, span, N1, dmax, (n2,))
    else:
        dG = []
    derivs = [vecG] + dG
    ffull = np.zeros((N1, n * nm))
    for k in range(n):
        acc = np.zeros((N1, nm))
        for i in range(k):
            acc += derivs[i] @ W[k - 1 - i].T
        ffull[:, k * nm:(k + 1) * nm] = -acc
    fbar = ffull[:, rows]
    coefF, spanF = cheb_fit(fbar, grid.h)
    fdot = cheb_eval_derivs(coefF, spanF, N1, 1, (n2,))[0]
    margin = max(4, grid.N // 10)
    return VectorizedSystem(
        n=n, m=m, grid=grid, P0=obs.P0, G=obs.G, At=At, W=W, H=H, Nmat=Nmat,
        rows=rows, Hb=Hb, Nb=Nb, Hinv=Hinv, M1=M1, vecG=vecG, derivs=derivs,
        fbar=fbar, fdot=fdot, i1=margin, i2=grid.N - margin)


def assemble_AQ_BQ(vsys):
    """The constant map A_Q, the sampled series B_Q(t), and its interior time average.

    The average over [t_i1, t_i2] is computed in telescoped form: the only
    quadrature is of G itself (composite Simpson); every differentiated term
    reduces to endpoint evaluations of lower-order derivatives, and the f'
    term integrates exactly to f(t2) - f(t1).
    """
    n, m = vsys.n, vsys.m
    nm = n * m
    h = vsys.grid.h
    A_Q = vsys.M1 @ vsys.Nb + vsys.Hb
    B_Q = (-(vsys.M1 @ vsys.fbar.T) + vsys.fdot.T - vsys.Hb @ vsys.vecG.T).T
    i1, i2 = vsys.i1, vsys.i2
    span = (i2 - i1) * h
    wq = simpson_weights(i2 - i1 + 1, h)
    IG = wq @ vsys.vecG[i1:i2 + 1]
    int_f = np.zeros(n * nm)
    for k in range(n):
        acc = np.zeros(nm)
        for i in range(k):
            if i == 0:
                acc += vsys.W[k - 1] @ IG
            else:
                acc += vsys.W[k - 1 - i] @ (vsys.derivs[i - 1][i2] - vsys.derivs[i - 1][i1])
        int_f[k * nm:(k + 1) * nm] = -acc
    int_fbar = int_f[vsys.rows]
    delta_fbar = vsys.fbar[i2] - vsys.fbar[i1]
    bq_mean = (-(vsys.M1 @ int_fbar) + delta_fbar - vsys.Hb @ IG) / span
    return A_Q, B_Q, bq_mean


@dataclass
class ConstancyReport:
    deviation: float
    tol: float
    constant: bool
    trim: int


def check_BQ_constancy(B_Q, mean=None, tol=1e-4, trim=2):
    """Deviation statistic max_i |B_Q(t_i) - mean|_inf / (1 + |mean|_inf).

    `trim` samples at each end are excluded (endpoint stencils degrade there).
    When `mean` is omitted the trimmed sample mean is used.
    """
    B_Q = np.asarray(B_Q)
    inner = B_Q[trim:B_Q.shape[0] - trim] if trim else B_Q
    mu = inner.mean(axis=0) if mean is None else np.asarray(mean)
    dev = float(np.max(np.abs(inner - mu)) / (1.0 + np.max(np.abs(mu))))
    return ConstancyReport(deviation=dev, tol=tol, constant=dev <= tol, trim=trim)


def assemble_symmetric_system(vsys, bq_mean, anchor=None):
    """Square system in (vech Q, vech Y(t_anchor)).

    Top block: A_Q D vech(Q) = mean B_Q.  Bottom block pins the data identity
    H y + N q = -f at the anchor sample (default: the end of the interior
    averaging window; passing grid.N anchors at the horizon).
    """
    n = vsys.n
    n2 = n * n
    p = n * (n + 1) // 2
    if anchor is None:
        anchor = vsys.i2
    D = duplication_matrix(n)
    AQ = vsys.M1 @ vsys.Nb + vsys.Hb
    A_s = np.block([[AQ @ D, np.zeros((n2, p))],
                    [vsys.Nb @ D, vsys.Hb @ D]])
    b_s = np.concatenate([np.asarray(bq_mean), -vsys.fbar[anchor]])
    return A_s, b_s, anchor


@dataclass
class SolutionSpace:
    """Affine parametrization Q(v) = Q0 + sum v_i dQ_i, F(v) = F0 + sum v_i dF_i."""

    Q0: np.ndarray
    F0: np.ndarray
    basis_Q: list
    basis_F: list
    r: int
    consistent: bool
    consistency_residual: float
    anchor_index: int
    Y_anchor: np.ndarray = field(repr=False)

    def member(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        Q = self.Q0 + sum(vi * dq for vi, dq in zip(v, self.basis_Q))
        F = self.F0 + sum(vi * df for vi, df in zip(v, self.basis_F))
        return sym(Q), sym(F)


def _propagate_Y(sys, vsys, Y_from, Qconst, anchor, with_G=True):
    """RK4 on Ydot = -(A'Y + YA) - Q - G from t_anchor to T (G linearly interpolated)."""
    A = sys.A
    h = vsys.grid.h
    G = vsys.G
    Y = Y_from.copy()
    for i in range(anchor, vsys.grid.N):
        def rhs(Ym, wgt):
            Gm = ((1 - wgt) * G[i] + wgt * G[i + 1]) if with_G else 0.0
            return -(A.T @ Ym + Ym @ A) - Qconst - Gm
        k1 = rhs(Y, 0.0)
        k2 = rhs(Y + 0.5 * h * k1, 0.5)
        k3 = rhs(Y + 0.5 * h * k2, 0.5)
        k4 = rhs(Y + h * k3, 1.0)
        Y = sym(Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    return Y


def consistency_and_parametrize(sys, vsys, A_s, b_s, anchor, tol=1e-6):
    """Least-squares particular solution + null-space basis of the symmetric system.

    Consistency requires |A_s x - b_s| <= tol (1 + |b_s|) at the minimum-norm
    solution.  The null-space Q-directions must agree in count with the
    structural dimension r = (n-m)(n-m+1)/2; on mismatch (degenerate
    numerics) the structural basis wins, with a warning.  Terminal weights
    are produced by propagating the anchored Y to the horizon.
    """
    n = vsys.n
    p = n * (n + 1) // 2
    D = duplication_matrix(n)
    x0, *_ = np.linalg.lstsq(A_s, b_s, rcond=None)
    resid = float(np.linalg.norm(A_s @ x0 - b_s) / (1.0 + np.linalg.norm(b_s)))
    consistent = resid <= tol
    _, s, Vt = np.linalg.svd(A_s)
    null = [Vt[i] for i in range(len(s)) if s[i] < 1e-8 * s[0]]
    null += [Vt[i] for i in range(len(s), Vt.shape[0])]
    r_struct, struct = solution_space_structure(sys)
    if len(null) != r_struct:
        warnings.warn(
            f"numerical null-space dimension {len(null)} != structural {r_struct}; "
            "using the structural basis", stacklevel=2)
        pairs_anchor = [(dQ, dP) for dQ, dP in struct]  # dY(t) = dP, constant
    else:
        pairs_anchor = [(sym(smat(v[:p], n)), sym(smat(v[p:], n))) for v in null]
    Q0 = sym(smat(x0[:p], n))
    Y_anchor = sym(smat(x0[p:], n))
    YT = _propagate_Y(sys, vsys, Y_anchor, Q0, anchor, with_G=True)
    F0 = sym(vsys.P0[vsys.grid.N] + YT)
    basis_Q, basis_F = [], []
    for dQ, dYa in pairs_anchor:
        dYT = _propagate_Y(sys, vsys, dYa, dQ, anchor, with_G=False)
        basis_Q.append(dQ)
        basis_F.append(sym(dYT))
    return SolutionSpace(Q0=Q0, F0=F0, basis_Q=basis_Q, basis_F=basis_F,
                         r=len(basis_Q), consistent=consistent,
                         consistency_residual=resid, anchor_index=anchor,
                         Y_anchor=Y_anchor)


def reconstruct_Y(vsys, Q):
    """Pointwise kernel-difference reconstruction y(t) = -H^-1 (N vec(Q) + f(t))."""
    q = vec(np.asarray(Q, dtype=float))
    rhs = -(vsys.fbar + (vsys.Nb @ q)[None, :])
    Yv = rhs @ vsys.Hinv.T
    return np.stack([sym(unvec(v, vsys.n)) for v in Yv])


def lyapunov_residual(sys, vsys, Q, interior=0.05):
    """Max defect of Ydot = -(A'Y + YA) - Q - G for the reconstructed Y.

    Ydot is evaluated analytically as -H^-1 f'(t); the end 5% of samples are
    excluded because the G data itself carries one-sided-stencil noise there.
    """
    Y = reconstruct_Y(vsys, Q)
    Ydot = np.stack([-sym(unvec(vsys.Hinv @ f, vsys.n)) for f in vsys.fdot])
    N1 = Y.shape[0]
    lo = int(np.ceil(interior * (N1 - 1)))
    hi = N1 - lo
    worst = 0.0
    for i in range(lo, hi):
        R = Ydot[i] + sys.A.T @ Y[i] + Y[i] @ sys.A + Q + vsys.G[i]
        worst = max(worst, float(np.abs(R).max()))
    return worst


# ---------------------------------------------------------------------------
# feasibility / selection / certificates over the affine family


def _family_maps(space):
    """PSD maps of the family in the v variable: Q(v) and F(v)."""
    return [(space.Q0, list(space.basis_Q)), (space.F0, list(space.basis_F))]


@dataclass
class FeasibilityReport:
    feasible: bool
    max_slack: float
    v_center: np.ndarray | None
    interval: tuple | None
    capped: bool = False


def _ridge_tol(space):
    scale = 1.0 + max(float(np.abs(space.Q0).max()), float(np.abs(space.F0).max()))
    return 1e-9 * scale


def _interval_r1(space, scan=(-50.0, 50.0), points=201, tol_feas=None):
    """Feasible interval of the one-parameter family by coarse scan + bisection.

    Feasibility is eigenvalue-based with a small negative tolerance: families
    riding a cone ridge (an identically zero eigenvalue along the family)
    would otherwise collapse to a point.  Endpoint precision ~1e-3 absolute
    or better (doubling expansion, then 60 bisection steps).
    """
    if tol_feas is None:
        tol_feas = _ridge_tol(space)
    dQ, dF = space.basis_Q[0], space.basis_F[0]

    def s(v):
        return min(min_eig_sym(space.Q0 + v * dQ), min_eig_sym(space.F0 + v * dF))

    vs = np.linspace(scan[0], scan[1], points)
    svals = np.array([s(v) for v in vs])
    i0 = int(np.argmax(svals))
    if svals[i0] < -tol_feas:
        return None
    v0 = vs[i0]

    def edge(direction):
        step = 1.0
        good = v0
        while s(v0 + direction * step) >= -tol_feas and step < 1e7:
            good = v0 + direction * step
            step *= 2.0
        bad = v0 + direction * step
        for _ in range(60):
            mid = 0.5 * (good + bad)
            if s(mid) >= -tol_feas:
                good = mid
            else:
                bad = mid
        return good

    return (edge(-1.0), edge(+1.0))


def lmi_feasibility(space, scan=(-50.0, 50.0), points=201):
    """Existence of a PSD member of the family.

    Maximizes the joint slack t with Q(v) >= tI and F(v) >= tI; the family is
    feasible iff t* >= -1e-7.  For one-parameter families the full feasible
    interval is reported as well.
    """
    if space.r == 0:
        t = min(min_eig_sym(space.Q0), min_eig_sym(space.F0))
        return FeasibilityReport(feasible=t >= -1e-7, max_slack=float(t),
                                 v_center=np.zeros(0), interval=None)
    tstar, v, sol = sdp.max_slack_feasibility(_family_maps(space), d=space.r)
    interval = _interval_r1(space, scan=scan, points=points) if space.r == 1 else None
    return FeasibilityReport(feasible=bool(tstar >= -1e-7), max_slack=tstar,
                             v_center=v, interval=interval,
                             capped=bool(sol.diagnostics.get("slack_capped", False)))


def interval_in_direction(space, interval, direction, base):
    """Express interval endpoints as multiples of a reference direction from a base.

    Returns (alpha_lo, alpha_hi, max_offdirection_residual); the residual
    measures how far the endpoint members stray from the line
    base + alpha * direction (zero for a genuinely one-dimensional family).
    """
    direction = np.asarray(direction, dtype=float)
    base = np.asarray(base, dtype=float)
    den = float(np.sum(direction * direction))
    alphas, resid = [], 0.0
    for v in interval:
        Qe, _ = space.member([v])
        a = float(np.sum((Qe - base) * direction) / den)
        alphas.append(a)
        resid = max(resid, float(np.linalg.norm(Qe - base - a * direction)))
    alphas.sort()
    return alphas[0], alphas[1], resid


def min_condition_number(space):
    """Member minimizing cond(Q): min alpha s.t. alpha I >= Q(v) >= 0, F(v) >= 0.

    Returns (Qstar, Fstar, v, alpha).  The conditioning objective needs a
    positive definite Q somewhere in the family; when none exists the solver
    status degrades and the caller sees alpha = inf.
    """
    n = space.Q0.shape[0]
    r = space.r
    d = r + 1
    In = np.eye(n)
    zero = np.zeros((n, n))
    maps = [
        (-space.Q0, [-dq for dq in space.basis_Q] + [In]),   # alpha I - Q(v) >= 0
        (space.Q0, list(space.basis_Q) + [zero]),            # Q(v) >= 0
        (space.F0, list(space.basis_F) + [zero]),            # F(v) >= 0
    ]
    f = np.zeros(d)
    f[-1] = 1.0
    sol = sdp.solve(sdp.ConicProblem(d=d, f=f, psd_maps=maps))
    if sol.x is None:
        return None, None, None, np.inf
    v = sol.x[:r]
    Q, F = space.member(v)
    return Q, F, v, float(sol.x[-1])


@dataclass
class MembershipResult:
    member: bool
    v: np.ndarray
    residual: float
    Q_member: np.ndarray = field(repr=False)
    F_member: np.ndarray = field(repr=False)
    psd_ok: bool = True


def membership_test(space, Q, tol=1e-4):
    """Is Q (up to tol) a PSD-feasible member of the family?

    Projects Q - Q0 onto span{dQ_i}; membership requires projection residual
    <= tol * (1 + |Q|_F) and both LMIs to hold at the projected coordinates.
    """
    Q = sym(np.asarray(Q, dtype=float))
    dq = Q - space.Q0
    if space.r:
        Bm = np.stack([vec(b) for b in space.basis_Q], axis=1)
        v, *_ = np.linalg.lstsq(Bm, vec(dq), rcond=None)
        raw = float(np.linalg.norm(vec(dq) - Bm @ v))
    else:
        v = np.zeros(0)
        raw = float(np.linalg.norm(dq))
    Qm, Fm = space.member(v)
    scale = 1.0 + float(np.linalg.norm(Q))
    psd_ok = is_psd(Qm, tol=1e-7) and is_psd(Fm, tol=1e-7)
    return MembershipResult(member=bool(raw <= tol * scale and psd_ok), v=v,
                            residual=raw / scale, Q_member=Qm, F_member=Fm,
                            psd_ok=psd_ok)


@dataclass
class UniquenessCertificate:
    unique: bool | None  # None = inconclusive
    status: str  # unique | non_unique | inconclusive
    reason: str
    optval: float = np.nan
    Xstar: np.ndarray | None = None
    rank_l: int = 0
    tangent_dim: int = -1
    interior_slack: float = np.nan
    witness_v: np.ndarray | None = None


def uniqueness_certificate(space, feasibility=None):
    """Decide whether the family admits exactly one PSD member.

    Decision ladder: (a) r = 0 -> unique.  (b) the zero matrix is a member ->
    unique (any other member would differ by an indefinite shift and leave
    the cone).  (c) a strictly PD member exists (max joint slack > 0) ->
    infinitely many members.  (d) boundary case: solve the normalized
    tangency program min tr(Qbar X) s.t. tr(dQ_i X) = 0, tr X = 1, X >= 0 at
    a feasible base member Qbar; a zero optimum yields the tangent-cone face
    T = {V2 S V2'} over range(X*), and the family is unique when T intersects
    span{dQ_i} trivially.  (e) anything else stays inconclusive -- except
    that a one-parameter family with a nondegenerate feasible interval is a
    constructive exhibit of non-uniqueness.
    """
    n = space.Q0.shape[0]
    p = n * (n + 1) // 2
    D = duplication_matrix(n)
    if space.r == 0:
        return UniquenessCertificate(True, "unique", "zero-dimensional solution space")
    zero_m = membership_test(space, np.zeros((n, n)), tol=1e-7)
    if zero_m.member:
        return UniquenessCertificate(True, "unique", "zero running cost is a member",
                                     witness_v=zero_m.v)
    if feasibility is None:
        feasibility = lmi_feasibility(space)
    tstar = feasibility.max_slack
    scale = 1.0 + float(np.abs(space.Q0).max())
    if not feasibility.feasible:
        return UniquenessCertificate(None, "inconclusive", "no feasible member found",
                                     interior_slack=tstar)
    if tstar > 1e-6 * scale:
        return UniquenessCertificate(False, "non_unique",
                                     "strictly positive definite member exists",
                                     interior_slack=tstar,
                                     witness_v=feasibility.v_center)
    # boundary: tangency program at a feasible base member
    vbase = feasibility.v_center if feasibility.v_center is not None else np.zeros(space.r)
    Qbar, _ = space.member(vbase)
    fobj = D.T @ vec(Qbar)
    Erows = [D.T @ vec(dq) for dq in space.basis_Q]
    Erows.append(vech(np.eye(n)))  # tr X = 1
    E = np.stack(Erows)
    h = np.zeros(space.r + 1)
    h[-1] = 1.0
    Xmaps = [(np.zeros((n, n)), [smat(col, n) for col in np.eye(p)])]
    sol = sdp.solve(sdp.ConicProblem(d=p, f=fobj, E=E, h=h, psd_maps=Xmaps))
    if sol.status in ("infeasible", "failed") or sol.x is None:
        return _second_member_search(space, feasibility,
                                     reason="tangency program infeasible")
    optval = float(fobj @ sol.x)
    Xstar = sym(smat(sol.x, n))
    if optval > 1e-7 * scale:
        return _second_member_search(space, feasibility, optval=optval, Xstar=Xstar,
                                     reason="tangency program bounded away from zero")
    w, V = np.linalg.eigh(Xstar)
    keep = w > 1e-7 * max(w.max(), 1e-300)
    V2 = V[:, keep]
    l = int(keep.sum())
    tmat = []
    for i in range(l):
        for j in range(i, l):
            X = np.zeros((l, l))
            X[i, j] = X[j, i] = 1.0
            tmat.append(vech(sym(V2 @ X @ V2.T)))
    Tb = np.stack(tmat, axis=1) if tmat else np.zeros((p, 0))
    Sb = np.stack([vech(dq) for dq in space.basis_Q], axis=1)
    joint = np.hstack([Tb, Sb])
    inter_dim = Tb.shape[1] + Sb.shape[1] - rank_tol(joint, tol=1e-8)
    if inter_dim == 0:
        return UniquenessCertificate(True, "unique",
                                     "tangent face meets the family trivially",
                                     optval=optval, Xstar=Xstar, rank_l=l,
                                     tangent_dim=0, interior_slack=tstar)
    return _second_member_search(space, feasibility, optval=optval, Xstar=Xstar,
                                 rank_l=l, tangent_dim=int(inter_dim),
                                 reason="tangent face intersects the family")


def _second_member_search(space, feasibility, reason, optval=np.nan, Xstar=None,
                          rank_l=0, tangent_dim=-1):
    """Constructive fallback: exhibit a second feasible member if one is visible."""
    if space.r == 1 and feasibility.interval is not None:
        lo, hi = feasibility.interval
        if hi - lo > 1e-4:
            return UniquenessCertificate(False, "non_unique",
                                         reason + "; nondegenerate feasible interval",
                                         optval=optval, Xstar=Xstar, rank_l=rank_l,
                                         tangent_dim=tangent_dim,
                                         interior_slack=feasibility.max_slack,
                                         witness_v=np.array([hi]))
        return UniquenessCertificate(True, "unique",
                                     reason + "; feasible interval is a point",
                                     optval=optval, Xstar=Xstar, rank_l=rank_l,
                                     tangent_dim=tangent_dim,
                                     interior_slack=feasibility.max_slack)
    vc = feasibility.v_center if feasibility.v_center is not None else np.zeros(space.r)
    tol = _ridge_tol(space)
    rng = np.random.default_rng(7)
    for _ in range(32):
        w = rng.standard_normal(space.r)
        w /= np.linalg.norm(w)
        for eps in (1e-1, 1e-2, 1e-3):
            Qc, Fc = space.member(vc + eps * w)
            if min_eig_sym(Qc) >= -tol and min_eig_sym(Fc) >= -tol:
                return UniquenessCertificate(False, "non_unique",
                                             reason + "; second member exhibited",
                                             optval=optval, Xstar=Xstar,
                                             rank_l=rank_l, tangent_dim=tangent_dim,
                                             interior_slack=feasibility.max_slack,
                                             witness_v=vc + eps * w)
    return UniquenessCertificate(None, "inconclusive", reason,
                                 optval=optval, Xstar=Xstar, rank_l=rank_l,
                                 tangent_dim=tangent_dim,
                                 interior_slack=feasibility.max_slack)


def indefinite_delta_check(space, feasibility=None, npairs=20, seed=0):
    """Eigenvalue spreads of differences of random feasible member pairs.

    Any two distinct members differ by an indefinite matrix; this samples
    `npairs` feasible pairs and returns [(min_eig, max_eig, |dQ|_F)].
    """
    if space.r == 0:
        return []
    if feasibility is None:
        feasibility = lmi_feasibility(space)
    rng = np.random.default_rng(seed)
    tol = _ridge_tol(space)

    def feasible(v):
        Qc, Fc = space.member(v)
        return min_eig_sym(Qc) >= -tol and min_eig_sym(Fc) >= -tol

    def sample():
        if space.r == 1 and feasibility.interval is not None:
            lo, hi = feasibility.interval
            pad = 0.05 * (hi - lo)
            return np.array([rng.uniform(lo + pad, hi - pad)])
        vc = feasibility.v_center
        w = rng.standard_normal(space.r)
        w /= np.linalg.norm(w)
        beta = 1.0
        while feasible(vc + beta * w) and beta < 1e6:
            beta *= 2.0
        good, bad = 0.0, beta
        for _ in range(40):
            mid = 0.5 * (good + bad)
            if feasible(vc + mid * w):
                good = mid
            else:
                bad = mid
        return vc + rng.uniform(0.1, 0.9) * good * w

    out = []
    guard = 0
    while len(out) < npairs and guard < 50 * npairs:
        guard += 1
        v1, v2 = sample(), sample()
        dQ = space.member(v1)[0] - space.member(v2)[0]
        if np.linalg.norm(dQ) < 1e-6:
            continue
        w = np.linalg.eigvalsh(sym(dQ))
        out.append((float(w[0]), float(w[-1]), float(np.linalg.norm(dQ))))
    return out


# ---------------------------------------------------------------------------
# orchestrator


@dataclass
class ExactResult:
    obs: object
    vsys: VectorizedSystem = field(repr=False)
    A_Q: np.ndarray = field(repr=False)
    B_Q: np.ndarray = field(repr=False)
    bq_mean: np.ndarray = field(repr=False)
    constancy: ConstancyReport = None
    space: SolutionSpace = None
    feasibility: FeasibilityReport = None

    @property
    def exists(self):
        return (self.obs.jameson.passed and self.constancy.constant
                and self.space.consistent and self.feasibility.feasible)


def exact_recovery(sys, K, grid, constancy_tol=1e-4, consistency_tol=1e-6,
                   scan=(-50.0, 50.0)):
    """Run the full exact path on gain samples K and return an ExactResult."""
    obs = derive_observation(sys, K, grid)
    vsys = build_vectorized_system(sys, obs, grid)
    A_Q, B_Q, bq_mean = assemble_AQ_BQ(vsys)
    constancy = check_BQ_constancy(B_Q, mean=bq_mean, tol=constancy_tol)
    A_s, b_s, anchor = assemble_symmetric_system(vsys, bq_mean)
    space = consistency_and_parametrize(sys, vsys, A_s, b_s, anchor,
                                        tol=consistency_tol)
    feas = lmi_feasibility(space, scan=scan)
    return ExactResult(obs=obs, vsys=vsys, A_Q=A_Q, B_Q=B_Q, bq_mean=bq_mean,
                       constancy=constancy, space=space, feasibility=feas)
