"""Dense exact and first-order solvers for small flow-recovery programs.

Two engines:

* :func:`solve_lp`: two-phase revised simplex for
  ``min/max c'x  s.t.  A x = b, x >= 0``.  Bland's rule is the default
  pivot choice so the solver terminates and returns the same basic optimum
  for the same input, every time.
* :func:`solve_cone`: an alternating splitting method for
  ``min f(x)  s.t.  ||y - A x||_2 <= delta, x >= 0`` with f either a
  positively weighted sum of entries or the Euclidean norm.  Each sweep
  takes an objective proximal step, projects onto the measurement ball,
  projects onto the nonnegative orthant, and updates scaled duals.

:func:`lp_oracle` is a brute-force basic-solution enumerator kept
deliberately independent of the simplex code so the two can check each
other in tests.

Problems here are desk scale (tens of rows/columns); everything is dense
and refactored freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

_PIVOT_TOL = 1e-10
_RATIO_TIE_TOL = 1e-12

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration-limit"


class ProblemTooLargeError(ValueError):
    """The brute-force oracle refuses instances beyond its guard."""


@dataclass(frozen=True)
class SolverOptions:
    """Shared tolerances and limits.

    ``tol_feas`` bounds constraint violation at an optimal LP vertex,
    ``tol`` is the primal/dual stopping tolerance of the splitting loop,
    ``rho`` its initial penalty (adapted by residual balancing), and
    ``relax`` its over-relaxation factor (1.0 disables it; values around
    1.6-1.8 speed convergence without changing the fixed point).
    """

    tol_feas: float = 1e-9
    tol: float = 1e-8
    max_iter: int = 100_000
    rho: float = 1.0
    relax: float = 1.7
    pivot_rule: str = "bland"  # or "dantzig" (falls back to bland on stall)
    lp_max_iter: int = 50_000


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class StandardLP:
    """``min/max c'x  s.t.  A x = b, x >= 0``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    sense: str = "min"


@dataclass(frozen=True)
class ConeProblem:
    """``min f(x)  s.t.  ||y - A x||_2 <= delta, x >= 0``.

    ``objective`` is ``"l1"`` (weighted sum of entries, weights default to
    one) or ``"l2"`` (Euclidean norm).  ``delta = 0`` degenerates to the
    equality-constrained program.
    """

    A: np.ndarray
    y: np.ndarray
    delta: float = 0.0
    weights: np.ndarray | None = None
    objective: str = "l1"


@dataclass(frozen=True)
class Solution:
    """Solver output.

    ``residual_eq`` is the max-norm equality violation (LP),
    ``residual_cone`` the amount by which the measurement ball is exceeded
    (cone solver).  ``basis`` is the final simplex basis when available,
    ``unbounded_index`` the entering variable that certified unboundedness.
    """

    x: np.ndarray
    status: str
    objective: float
    residual_eq: float = 0.0
    residual_cone: float = 0.0
    iterations: int = 0
    basis: tuple[int, ...] | None = None
    unbounded_index: int | None = None


def project_nonneg(v: np.ndarray) -> np.ndarray:
    """Componentwise projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def project_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto the ball around ``center``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    center = np.asarray(center, dtype=float)
    diff = v - center
    nrm = float(np.linalg.norm(diff))
    if nrm <= radius:
        return v.copy()
    if nrm == 0.0:
        return center.copy()
    return center + diff * (radius / nrm)


def _pivot_loop(A, b, c, basis, opts: SolverOptions, rule: str):
    """Run simplex pivots in place on ``basis``.

    Returns (status, iterations, unbounded_entering_index).  ``A`` must
    have full row rank with ``basis`` indexing a nonsingular column set and
    ``b`` the current right-hand side.
    """
    m, n = A.shape
    tol = opts.tol_feas
    degenerate_streak = 0
    use_bland = rule == "bland"
    for it in range(1, opts.lp_max_iter + 1):
        lu = lu_factor(A[:, basis])
        x_b = lu_solve(lu, b)
        y = lu_solve(lu, c[basis], trans=1)
        reduced = c - A.T @ y
        reduced[basis] = 0.0

        if use_bland:
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                return STATUS_OPTIMAL, it - 1, None
            j = int(candidates[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -tol:
                return STATUS_OPTIMAL, it - 1, None

        d = lu_solve(lu, A[:, j])
        positive = d > _PIVOT_TOL
        if not positive.any():
            return STATUS_UNBOUNDED, it, j

        x_pos = np.maximum(x_b, 0.0)
        ratios = np.full(m, math.inf)
        ratios[positive] = x_pos[positive] / d[positive]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + _RATIO_TIE_TOL * (1.0 + rmin))
        # Bland tie-break: leave the tied row whose basic variable has the
        # smallest index.
        leave = int(min(ties, key=lambda i: basis[i]))
        basis[leave] = j

        if not use_bland:
            # Dantzig pricing can cycle on degenerate vertices; hand over to
            # Bland after a long run of zero-progress pivots.
            if rmin <= _RATIO_TIE_TOL:
                degenerate_streak += 1
                if degenerate_streak > 50:
                    use_bland = True
            else:
                degenerate_streak = 0
    return STATUS_ITERATION_LIMIT, opts.lp_max_iter, None


def _basic_point(A, b, basis, n):
    lu = lu_factor(A[:, basis])
    x = np.zeros(n)
    x[basis] = lu_solve(lu, b)
    return x


def solve_lp(p: StandardLP, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Two-phase revised simplex over the equality-constrained orthant."""
    A = np.atleast_2d(np.asarray(p.A, dtype=float))
    b = np.asarray(p.b, dtype=float).ravel()
    c = np.asarray(p.c, dtype=float).ravel()
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    if p.sense not in ("min", "max"):
        raise ValueError(f"unknown sense {p.sense!r}")
    minimize = p.sense == "min"
    c_work = c if minimize else -c

    A_work = A.copy()
    b_work = b.copy()
    flip = b_work < 0
    A_work[flip] *= -1
    b_work[flip] *= -1

    # Phase 1: drive artificial variables to zero.
    A1 = np.hstack([A_work, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    status1, iters1, _ = _pivot_loop(A1, b_work, c1, basis, opts, rule="bland")
    if status1 == STATUS_ITERATION_LIMIT:
        return Solution(
            x=np.zeros(n),
            status=STATUS_ITERATION_LIMIT,
            objective=math.nan,
            iterations=iters1,
        )
    x1 = _basic_point(A1, b_work, basis, n + m)
    if float(c1 @ x1) > opts.tol_feas:
        return Solution(
            x=np.zeros(n),
            status=STATUS_INFEASIBLE,
            objective=math.nan,
            iterations=iters1,
        )

    # Pivot leftover artificial variables out of the basis.  When no
    # original column can replace one, the artificial's own constraint row
    # is implied by the others (its multiplier row annihilates the original
    # columns), so that row is dropped together with the artificial.
    redundant_rows: list[int] = []
    for pos in range(m):
        if basis[pos] < n:
            continue
        lu = lu_factor(A1[:, basis])
        e = np.zeros(m)
        e[pos] = 1.0
        w = lu_solve(lu, e, trans=1)
        row_vals = w @ A_work
        in_basis = set(basis)
        candidates = [
            j for j in range(n) if j not in in_basis and abs(row_vals[j]) > 1e-9
        ]
        if candidates:
            basis[pos] = candidates[0]
        else:
            redundant_rows.append(basis[pos] - n)
    if redundant_rows:
        keep = [i for i in range(m) if i not in set(redundant_rows)]
        A_work = A_work[keep, :]
        b_work = b_work[keep]
        basis = [j for j in basis if j < n]
        m = len(keep)

    # Phase 2 on the original objective.
    status2, iters2, unbounded_j = _pivot_loop(
        A_work, b_work, c_work, basis, opts, rule=opts.pivot_rule
    )
    total_iters = iters1 + iters2
    if status2 == STATUS_UNBOUNDED:
        x = _basic_point(A_work, b_work, basis, n)
        return Solution(
            x=x,
            status=STATUS_UNBOUNDED,
            objective=-math.inf if minimize else math.inf,
            residual_eq=float(np.max(np.abs(A @ x - b))),
            iterations=total_iters,
            basis=tuple(basis),
            unbounded_index=unbounded_j,
        )
    if status2 == STATUS_ITERATION_LIMIT:
        return Solution(
            x=np.zeros(n),
            status=STATUS_ITERATION_LIMIT,
            objective=math.nan,
            iterations=total_iters,
        )
    x = _basic_point(A_work, b_work, basis, n)
    return Solution(
        x=x,
        status=STATUS_OPTIMAL,
        objective=float(c @ x),
        residual_eq=float(np.max(np.abs(A @ x - b))),
        iterations=total_iters,
        basis=tuple(basis),
    )


def lp_oracle(p: StandardLP, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Enumerate basic solutions; exact up to linear-solve roundoff.

    Guarded to tiny instances: every full-rank column subset of size
    rank(A) is solved exactly and the best feasible basic solution wins.
    Assumes the optimum is attained at a vertex (bounded problem).
    """
    A = np.atleast_2d(np.asarray(p.A, dtype=float))
    b = np.asarray(p.b, dtype=float).ravel()
    c = np.asarray(p.c, dtype=float).ravel()
    m, n = A.shape
    if n > 16 or m > 8:
        raise ProblemTooLargeError(f"oracle guard exceeded: {m}x{n}")
    if p.sense not in ("min", "max"):
        raise ValueError(f"unknown sense {p.sense!r}")
    better = (lambda a, b: a < b) if p.sense == "min" else (lambda a, b: a > b)

    rank = int(np.linalg.matrix_rank(A, tol=1e-10)) if A.size else 0
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 0.0)
    best_obj = None
    best_x = None
    if rank == 0:
        if float(np.max(np.abs(b), initial=0.0)) <= opts.tol_feas * scale:
            best_obj, best_x = 0.0, np.zeros(n)
    else:
        for subset in combinations(range(n), rank):
            cols = A[:, subset]
            xs, _, col_rank, _ = np.linalg.lstsq(cols, b, rcond=None)
            if col_rank < rank:
                continue
            if float(np.max(np.abs(cols @ xs - b))) > 1e-9 * scale:
                continue
            if xs.size and float(xs.min()) < -1e-9 * scale:
                continue
            obj = float(c[list(subset)] @ xs)
            if best_obj is None or better(obj, best_obj):
                x = np.zeros(n)
                x[list(subset)] = xs
                best_obj, best_x = obj, x
    if best_x is None:
        return Solution(x=np.zeros(n), status=STATUS_INFEASIBLE, objective=math.nan)
    return Solution(
        x=best_x,
        status=STATUS_OPTIMAL,
        objective=best_obj,
        residual_eq=float(np.max(np.abs(A @ best_x - b))),
    )


def _stack_norm(a: np.ndarray, b: np.ndarray) -> float:
    return math.sqrt(float(a @ a) + float(b @ b))


def solve_cone(p: ConeProblem, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Splitting method for the ball-constrained nonnegative program.

    The iterate alternates an objective proximal step (a cached dense
    factorization solve), projection of the measurement image onto the
    ball around ``y``, projection of the variable copy onto the orthant,
    and scaled dual updates.  The penalty is rebalanced when the primal and
    dual residuals drift apart.  An infeasible ball (``delta`` smaller than
    the distance from the nonnegative image to ``y``) shows up as a
    stalled positive primal residual with a vanishing dual residual and is
    reported as such.
    """
    A = np.atleast_2d(np.asarray(p.A, dtype=float))
    y = np.asarray(p.y, dtype=float).ravel()
    m, n = A.shape
    if y.shape != (m,):
        raise ValueError("inconsistent cone dimensions")
    if p.delta < 0:
        raise ValueError("delta must be nonnegative")
    if p.objective not in ("l1", "l2"):
        raise ValueError(f"unknown objective {p.objective!r}")
    quad = p.objective == "l2"
    if p.weights is None:
        lam = np.ones(n)
    else:
        lam = np.asarray(p.weights, dtype=float).ravel()
        if lam.shape != (n,) or lam.min() <= 0:
            raise ValueError("weights must be positive and length-matched")

    At = np.ascontiguousarray(A.T)
    AtA = At @ A
    rho = opts.rho
    alpha = opts.relax

    def factor(rho_val: float):
        shift = (1.0 + rho_val) / rho_val if quad else 1.0
        return cho_factor(AtA + shift * np.eye(n))

    chol = factor(rho)
    lam_over_rho = lam / rho

    z1 = y.copy()
    z2 = np.zeros(n)
    u1 = np.zeros(m)
    u2 = np.zeros(n)
    x = np.zeros(n)

    tol = opts.tol
    sqrt_mn = math.sqrt(m + n)
    sqrt_n = math.sqrt(n)

    # Penalty bounds keep the dual residual meaningful on infeasible
    # problems (unbounded growth would mask the stall signature).
    rho_min, rho_max = 1e-4, 1e4
    adapt_every = 50
    stall_window = 500
    prev_window_r = math.inf
    stall_count = 0
    status = STATUS_ITERATION_LIMIT
    it = 0
    for it in range(1, opts.max_iter + 1):
        rhs = At @ (z1 - u1) + (z2 - u2)
        if not quad:
            rhs = rhs - lam_over_rho
        x = cho_solve(chol, rhs)
        ax = A @ x

        ax_h = alpha * ax + (1.0 - alpha) * z1
        x_h = alpha * x + (1.0 - alpha) * z2
        z1_new = project_ball(ax_h + u1, y, p.delta)
        z2_new = np.maximum(x_h + u2, 0.0)
        u1 += ax_h - z1_new
        u2 += x_h - z2_new

        r_pri = _stack_norm(ax - z1_new, x - z2_new)
        s_dual = rho * float(
            np.linalg.norm(At @ (z1_new - z1) + (z2_new - z2))
        )
        z1, z2 = z1_new, z2_new

        eps_pri = sqrt_mn * tol + tol * max(
            _stack_norm(ax, x), _stack_norm(z1, z2)
        )
        eps_dual = sqrt_n * tol + tol * rho * float(
            np.linalg.norm(At @ u1 + u2)
        )
        if r_pri <= eps_pri and s_dual <= eps_dual:
            status = STATUS_OPTIMAL
            break

        if it % adapt_every == 0:
            # Penalty rebalancing keeps the two residuals within a decade.
            if r_pri > 10.0 * s_dual and rho < rho_max:
                rho = min(rho * 2.0, rho_max)
                u1 *= 0.5
                u2 *= 0.5
                lam_over_rho = lam / rho
                if quad:
                    chol = factor(rho)
            elif s_dual > 10.0 * r_pri and rho > rho_min:
                rho = max(rho * 0.5, rho_min)
                u1 *= 2.0
                u2 *= 2.0
                lam_over_rho = lam / rho
                if quad:
                    chol = factor(rho)
        if it % stall_window == 0:
            # Divergence signature: the primal residual pins at a positive
            # value (the gap between the ball and the nonnegative image)
            # while the z-iterates settle, so the dual residual collapses.
            if (
                abs(prev_window_r - r_pri) <= 1e-9 * max(r_pri, 1e-30)
                and r_pri > 1e3 * eps_pri
            ):
                stall_count += 1
                if stall_count >= 4 and s_dual <= max(eps_dual * 10, r_pri * 1e-3):
                    status = STATUS_INFEASIBLE
                    break
            else:
                stall_count = 0
            prev_window_r = r_pri

    x_out = z2.copy()
    resid = float(np.linalg.norm(y - A @ x_out))
    objective = (
        float(np.linalg.norm(x_out)) if quad else float(lam @ x_out)
    )
    if status == STATUS_INFEASIBLE:
        objective = math.nan
    return Solution(
        x=x_out,
        status=status,
        objective=objective,
        residual_cone=max(0.0, resid - p.delta),
        iterations=it,
    )
