"""Dense subproblem solvers.

Two families live here:

* ``solve_primal`` -- the per-sample simplex-constrained least squares QP,
  solved by a primal active-set method with exact KKT multiplier recovery.
* ``solve_lp`` -- a two-phase dense tableau simplex (Dantzig pricing with a
  Bland fallback on degenerate stalls), used for the relaxed dual problems
  and the interior-point feasibility probes.

Both are stateless and reentrant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ContractViolation, ProblemInstance

ACT_TOL = 1e-9
KKT_REG = 1e-12
PIVOT_TOL = 1e-9
DEGENERATE_STREAK = 50

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


# ---------------------------------------------------------------------------
# Primal problem (x fixed): per-sample QP over the probability simplex
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimalSolution:
    theta: np.ndarray       # K x N
    lam: np.ndarray         # N, multipliers of theta_i' 1 = 1
    mu: np.ndarray          # K x N, multipliers of theta >= 0
    objective: float
    stationarity: float     # max over samples of the KKT residual (inf-norm)


def simplex_qp(G: np.ndarray, h: np.ndarray, max_iter: int | None = None
               ) -> tuple[np.ndarray, float, np.ndarray]:
    """Minimize ``theta' G theta - 2 h' theta`` over the probability simplex.

    ``G`` must be symmetric PSD.  Returns ``(theta, lam, mu)`` where the
    multipliers follow ``grad - lam * 1 - mu = 0`` with ``mu >= 0`` on the
    active bounds and zero elsewhere.
    """
    K = G.shape[0]
    H = 2.0 * G
    c = -2.0 * h
    if max_iter is None:
        max_iter = 50 * K + 50
    theta = np.full(K, 1.0 / K)
    active = np.zeros(K, dtype=bool)
    for _ in range(max_iter):
        grad = H @ theta + c
        free = np.flatnonzero(~active)
        nf = free.size
        if nf > 1:
            kkt = np.zeros((nf + 1, nf + 1))
            kkt[:nf, :nf] = H[np.ix_(free, free)] + KKT_REG * np.eye(nf)
            kkt[:nf, nf] = 1.0
            kkt[nf, :nf] = 1.0
            rhs = np.concatenate([-grad[free], [0.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            p_free = sol[:nf]
        else:
            p_free = np.zeros(nf)
        scale = 1.0 + float(np.abs(grad).max(initial=0.0))
        if np.abs(p_free).max(initial=0.0) <= 1e-13 * scale:
            lam = float(grad[free].mean())
            mult = grad - lam
            mult[free] = 0.0
            cand = np.flatnonzero(active & (mult < -1e-12 * scale))
            if cand.size == 0:
                break
            # most negative multiplier leaves the working set, lowest index on ties
            worst = cand[np.argmin(mult[cand])]
            active[worst] = False
            continue
        alpha = 1.0
        block = -1
        for pos, k in enumerate(free):
            if p_free[pos] < 0.0:
                step = theta[k] / -p_free[pos]
                if step < alpha:
                    alpha, block = step, k
        theta[free] += alpha * p_free
        if block >= 0:
            theta[block] = 0.0
            active[block] = True
        np.clip(theta, 0.0, None, out=theta)
        theta /= theta.sum()

    active = active | (theta <= ACT_TOL)
    theta[active] = 0.0
    theta /= theta.sum()
    grad = H @ theta + c
    free = ~active
    lam = float(grad[free].mean())
    mu = np.where(active, grad - lam, 0.0)
    return theta, lam, mu


def solve_primal(instance: ProblemInstance, x_fixed: np.ndarray) -> PrimalSolution:
    """Solve the primal problem at a fixed ``x`` (one small QP per sample)."""
    x = np.asarray(x_fixed, dtype=float)
    if x.shape != (instance.M, instance.K):
        raise ContractViolation(f"x must be {instance.M}x{instance.K}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("x must be finite")
    y = instance.y
    G = x.T @ x
    XtY = x.T @ y
    K, N = instance.K, instance.N
    theta = np.empty((K, N))
    mu = np.empty((K, N))
    lam = np.empty(N)
    resid = 0.0
    for i in range(N):
        th, li, mi = simplex_qp(G, XtY[:, i])
        theta[:, i], lam[i], mu[:, i] = th, li, mi
        grad = 2.0 * G @ th - 2.0 * XtY[:, i]
        resid = max(resid, float(np.abs(grad - li - mi).max()))
    r = y - x @ theta
    return PrimalSolution(theta=theta, lam=lam, mu=mu, objective=float(np.sum(r * r)),
                          stationarity=resid)


# ---------------------------------------------------------------------------
# Linear programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearProgram:
    """``minimize c'v`` subject to ``A v (sense) b`` and ``lb <= v <= ub``.

    ``senses`` holds one of ``"<="``, ``">="``, ``"=="`` per row.  Bounds may
    be infinite.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        if n < 1:
            raise ContractViolation("LP needs at least one variable")
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != A.shape[0] or len(self.senses) != A.shape[0]:
            raise ContractViolation("row count mismatch between A, b and senses")
        if any(s not in ("<=", ">=", "==") for s in self.senses):
            raise ContractViolation("unknown row sense")
        lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ContractViolation("LP coefficients must be finite")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or np.any(lb > ub):
            raise ContractViolation("bad variable bounds")
        for name, val in (("c", c), ("A", A), ("b", b), ("lb", lb), ("ub", ub)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", tuple(self.senses))

    @property
    def n(self) -> int:
        return self.c.size

    def residual(self, v: np.ndarray) -> float:
        """Largest constraint or bound violation at ``v``."""
        worst = 0.0
        if self.A.shape[0]:
            ax = self.A @ v
            for s, lhs, rhs in zip(self.senses, ax, self.b):
                if s == "<=":
                    worst = max(worst, lhs - rhs)
                elif s == ">=":
                    worst = max(worst, rhs - lhs)
                else:
                    worst = max(worst, abs(lhs - rhs))
        worst = max(worst, float(np.max(self.lb - v, initial=0.0)),
                    float(np.max(v - self.ub, initial=0.0)))
        return float(worst)


@dataclass(frozen=True)
class LpResult:
    status: str
    point: np.ndarray | None
    objective: float
    pivots: int = 0


def _standard_form(lp: LinearProgram):
    """Map to ``min cs'u, As u (senses) bs, u >= 0`` with ``v = offset + T u``."""
    n = lp.n
    cols = []          # (var index, sign)
    offset = np.zeros(n)
    extra_rows = []    # (column, bound) meaning u_col <= bound
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    T = np.zeros((n, len(cols)))
    for col, (j, sgn) in enumerate(cols):
        T[j, col] = sgn
    As = lp.A @ T
    bs = lp.b - lp.A @ offset
    senses = list(lp.senses)
    if extra_rows:
        ub_rows = np.zeros((len(extra_rows), len(cols)))
        for r, (col, bound) in enumerate(extra_rows):
            ub_rows[r, col] = 1.0
        As = np.vstack([As, ub_rows])
        bs = np.concatenate([bs, [bd for _, bd in extra_rows]])
        senses += ["<="] * len(extra_rows)
    return T, offset, lp.c @ T, As, bs, senses


class _Tableau:
    """Dense simplex tableau; the last row holds reduced costs and ``-objective``."""

    def __init__(self, body: np.ndarray, basis: list[int]):
        self.t = body
        self.basis = basis
        self.pivots = 0

    @property
    def m(self) -> int:
        return self.t.shape[0] - 1

    def set_cost(self, cost: np.ndarray) -> None:
        t = self.t
        t[-1, :-1] = cost
        t[-1, -1] = 0.0
        for r, bvar in enumerate(self.basis):
            cb = cost[bvar]
            if cb != 0.0:
                t[-1] -= cb * t[r]

    def pivot(self, r: int, j: int) -> None:
        t = self.t
        prow = t[r] / t[r, j]
        col = t[:, j]
        rows = np.flatnonzero(col)
        if rows.size > t.shape[0] // 2:
            t -= col[:, None] * prow
        else:
            t[rows] -= col[rows, None] * prow
        t[r] = prow
        self.basis[r] = j
        self.pivots += 1

    def run(self, allowed: int, max_pivots: int) -> str:
        """Pivot over the first ``allowed`` columns until optimal or unbounded.

        Entering column is the most negative reduced cost (lowest index on
        ties).  After ``DEGENERATE_STREAK`` consecutive degenerate pivots the
        rule switches to Bland's smallest-index rule until progress resumes,
        which rules out cycling.
        """
        t = self.t
        m = self.m
        basis = self.basis
        stall = 0
        while True:
            if self.pivots > max_pivots:
                raise RuntimeError("simplex pivot limit exceeded")
            red = t[-1, :allowed]
            if stall >= DEGENERATE_STREAK:
                cand = np.flatnonzero(red < -PIVOT_TOL)
                if cand.size == 0:
                    return OPTIMAL
                j = int(cand[0])
            else:
                j = int(np.argmin(red))
                if red[j] >= -PIVOT_TOL:
                    return OPTIMAL
            col = t[:m, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return UNBOUNDED
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            if ties.size == 1:
                r = int(ties[0])
            else:
                r = int(ties[np.argmin([basis[i] for i in ties])])
            stall = stall + 1 if best <= 1e-12 else 0
            self.pivot(r, j)


def _two_phase(cs: np.ndarray, As: np.ndarray, bs: np.ndarray, senses: Sequence[str],
               tol: float):
    """Two-phase simplex on ``min cs'u, As u (senses) bs, u >= 0``.

    Returns ``(status, u, basis, rows)`` where ``u`` holds the structural
    values, ``basis`` the basic structural column per kept row (``-1`` for a
    slack) and ``rows`` the kept row indices.
    """
    m, nu = As.shape
    As = As.copy()
    bs = bs.copy()
    senses = list(senses)
    for r in range(m):
        if bs[r] < 0.0:
            As[r] *= -1.0
            bs[r] *= -1.0
            senses[r] = {"<=": ">=", ">=": "<=", "==": "=="}[senses[r]]
    n_slack = sum(s != "==" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    ncols = nu + n_slack + n_art
    body = np.zeros((m + 1, ncols + 1))
    body[:m, :nu] = As
    body[:m, -1] = bs
    basis = [-1] * m
    s_col = nu
    a_col = nu + n_slack
    for r in range(m):
        if senses[r] == "<=":
            body[r, s_col] = 1.0
            basis[r] = s_col
            s_col += 1
        elif senses[r] == ">=":
            body[r, s_col] = -1.0
            s_col += 1
            body[r, a_col] = 1.0
            basis[r] = a_col
            a_col += 1
        else:
            body[r, a_col] = 1.0
            basis[r] = a_col
            a_col += 1
    tab = _Tableau(body, basis)
    max_pivots = 200 * (m + ncols) + 1000
    scale = 1.0 + float(np.abs(bs).max(initial=0.0))

    n_real = nu + n_slack
    pivots = 0
    if n_art:
        cost1 = np.zeros(ncols)
        cost1[n_real:] = 1.0
        tab.set_cost(cost1)
        tab.run(ncols, max_pivots)
        if -tab.t[-1, -1] > tol * scale:
            return INFEASIBLE, None, None, None, tab.pivots
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = []
        for r in range(tab.m):
            if tab.basis[r] >= n_real:
                row = tab.t[r, :n_real]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if nz.size == 0:
                    continue
                tab.pivot(r, int(nz[0]))
            keep.append(r)
        t = tab.t
        body2 = np.vstack([t[keep][:, list(range(n_real)) + [ncols]], np.zeros(n_real + 1)])
        pivots = tab.pivots
        tab = _Tableau(body2, [tab.basis[r] for r in keep])
        rows = keep
    else:
        rows = list(range(m))

    cost2 = np.zeros(n_real)
    cost2[:nu] = cs
    tab.set_cost(cost2)
    status = tab.run(n_real, max_pivots)
    pivots += tab.pivots
    if status == UNBOUNDED:
        return UNBOUNDED, None, None, None, pivots

    u_full = np.zeros(n_real)
    u_full[tab.basis] = tab.t[:-1, -1]
    # polish the basic solution against the original standard-form rows
    std = np.zeros((m, n_real))
    std[:, :nu] = As
    s_col = nu
    for r in range(m):
        if senses[r] == "<=":
            std[r, s_col] = 1.0
            s_col += 1
        elif senses[r] == ">=":
            std[r, s_col] = -1.0
            s_col += 1
    B = std[np.ix_(rows, tab.basis)]
    try:
        ub_ = np.linalg.solve(B, bs[rows])
        if np.all(np.isfinite(ub_)) and np.abs(ub_ - u_full[tab.basis]).max(initial=0.0) < 1e-6 * scale:
            u_full[tab.basis] = ub_
    except np.linalg.LinAlgError:
        pass
    struct_basis = [j if j < nu else -1 for j in tab.basis]
    return OPTIMAL, np.clip(u_full[:nu], 0.0, None), struct_basis, rows, pivots


def _solve_primal_form(lp: LinearProgram, tol: float) -> LpResult:
    T, offset, cs, As, bs, senses = _standard_form(lp)
    status, u, _, _, pivots = _two_phase(cs, As, bs, senses, tol)
    if status == INFEASIBLE:
        return LpResult(INFEASIBLE, None, float("nan"), pivots)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, None, float("-inf"), pivots)
    v = offset + T @ u
    return LpResult(OPTIMAL, v, float(lp.c @ v), pivots)


def _inequality_rows(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray]:
    """All rows and finite bounds written as ``G v <= r``."""
    senses = np.array(lp.senses, dtype=object)
    le = (senses == "<=") | (senses == "==")
    ge = (senses == ">=") | (senses == "==")
    eye = np.eye(lp.n)
    has_lb = np.isfinite(lp.lb)
    has_ub = np.isfinite(lp.ub)
    G = np.vstack([lp.A[le], -lp.A[ge], -eye[has_lb], eye[has_ub]])
    r = np.concatenate([lp.b[le], -lp.b[ge], -lp.lb[has_lb], lp.ub[has_ub]])
    return G, r


def _solve_dual_form(lp: LinearProgram, tol: float) -> LpResult | None:
    """Solve ``min c'v, G v <= r`` through its dual ``min r'w, G'w = -c, w >= 0``.

    The primal point is read off the optimal dual basis: the basic rows of
    ``G`` hold with equality.  Returns ``None`` when the dual is infeasible or
    its basis does not pin down ``v``; the caller then falls back to the
    primal tableau.
    """
    G, r = _inequality_rows(lp)
    n = lp.n
    status, w, basis, rows, pivots = _two_phase(r, G.T, -lp.c, ("==",) * n, tol)
    if status == UNBOUNDED:
        return LpResult(INFEASIBLE, None, float("nan"), pivots)
    if status != OPTIMAL or len(rows) != n or min(basis) < 0:
        return None
    try:
        v = np.linalg.solve(G[basis], r[basis])
    except np.linalg.LinAlgError:
        return None
    scale = 1.0 + float(np.abs(r).max(initial=0.0))
    if not np.all(np.isfinite(v)) or float(np.max(G @ v - r, initial=0.0)) > tol * scale:
        return None
    return LpResult(OPTIMAL, v, float(lp.c @ v), pivots)


def solve_lp(lp: LinearProgram, tol: float = 1e-7) -> LpResult:
    """Two-phase dense tableau simplex.

    LPs with many more rows than variables are solved through their dual,
    whose tableau has one row per variable; the primal tableau handles the
    rest and any case the dual route cannot settle.  Deterministic for
    identical input.  Returns ``infeasible`` or ``unbounded`` statuses
    instead of raising.
    """
    n_rows = lp.A.shape[0] + int(np.isfinite(lp.lb).sum() + np.isfinite(lp.ub).sum())
    if n_rows > 2 * lp.n:
        res = _solve_dual_form(lp, tol)
        if res is not None:
            return res
    return _solve_primal_form(lp, tol)


def lp_from_rows(c: Sequence[float], rows: Sequence[tuple[Sequence[float], str, float]],
                 lb, ub, names: Sequence[str] = ()) -> LinearProgram:
    """Convenience constructor from ``(coeffs, sense, rhs)`` triples."""
    c = np.asarray(c, dtype=float)
    if rows:
        A = np.array([r[0] for r in rows], dtype=float)
        senses = tuple(r[1] for r in rows)
        b = np.array([r[2] for r in rows], dtype=float)
    else:
        A = np.zeros((0, c.size))
        senses = ()
        b = np.zeros(0)
    return LinearProgram(c=c, A=A, b=b, senses=senses, lb=lb, ub=ub, names=tuple(names))
