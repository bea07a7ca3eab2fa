"""Bounded-variable primal simplex (two-phase, dense tableau).

Rows are turned into equalities with one slack each; slack bounds carry the
row sense. Phase 1 minimizes the sum of artificials on rows whose initial
slack value is out of bounds. Pivoting uses Bland's smallest-index rule by
default, which guarantees termination on degenerate problems.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import MilpModel, SolverOptions, Solution, Status

# status codes returned by the compiled kernel
_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITERLIMIT = 0, 1, 2, 3

BLAND = 0
DANTZIG = 1

_STATUS = {
    _OPTIMAL: Status.OPTIMAL,
    _INFEASIBLE: Status.INFEASIBLE,
    _UNBOUNDED: Status.UNBOUNDED,
    _ITERLIMIT: Status.ITERATION_LIMIT,
}


@njit(cache=True)
def _iterate(T, xv, lo, hi, basis, is_basic, d, cost, rule, max_iter, ptol, dtol):
    """Run simplex iterations in place until optimal/unbounded/limit.

    Returns (code, iterations).
    """
    m, N = T.shape
    it = 0
    degenerate_run = 0
    use_bland = rule == BLAND
    while True:
        # pricing
        q = -1
        qdir = 0
        best = 0.0
        for j in range(N):
            if is_basic[j]:
                continue
            dj = d[j]
            if dj < -dtol and xv[j] < hi[j] - 1e-12:
                direction = 1
            elif dj > dtol and xv[j] > lo[j] + 1e-12:
                direction = -1
            else:
                continue
            if use_bland:
                q = j
                qdir = direction
                break
            if abs(dj) > best:
                best = abs(dj)
                q = j
                qdir = direction
        if q < 0:
            return 0, it
        if it >= max_iter:
            return 3, it

        # ratio test; leaving index -1 means the entering variable flips bounds
        theta = np.inf
        leave = -1
        leave_var = N + 1
        if np.isfinite(hi[q]) and np.isfinite(lo[q]):
            theta = hi[q] - lo[q]
            leave_var = q
        for i in range(m):
            alpha = qdir * T[i, q]
            b = basis[i]
            if alpha > ptol:
                if not np.isfinite(lo[b]):
                    continue
                lim = (xv[b] - lo[b]) / alpha
            elif alpha < -ptol:
                if not np.isfinite(hi[b]):
                    continue
                lim = (hi[b] - xv[b]) / (-alpha)
            else:
                continue
            if lim < 0.0:
                lim = 0.0
            if lim < theta - 1e-12:
                theta = lim
                leave = i
                leave_var = b
            elif lim <= theta + 1e-12 and b < leave_var:
                theta = min(theta, lim)
                leave = i
                leave_var = b
        if not np.isfinite(theta):
            return 2, it
        it += 1

        if theta <= 1e-12:
            degenerate_run += 1
            if degenerate_run > 50:
                use_bland = True
        else:
            degenerate_run = 0

        # move along the edge
        step = qdir * theta
        for i in range(m):
            xv[basis[i]] -= step * T[i, q]
        xv[q] += step

        if leave < 0:
            # bound flip of the entering variable
            xv[q] = hi[q] if qdir > 0 else lo[q]
            continue

        b = basis[leave]
        if qdir * T[leave, q] > 0:
            xv[b] = lo[b]
        else:
            xv[b] = hi[b]

        piv = T[leave, q]
        for j in range(N):
            T[leave, j] /= piv
        for i in range(m):
            if i == leave:
                continue
            f = T[i, q]
            if f != 0.0:
                for j in range(N):
                    T[i, j] -= f * T[leave, j]
        dq = d[q]
        for j in range(N):
            d[j] -= dq * T[leave, j]
        is_basic[b] = False
        is_basic[q] = True
        basis[leave] = q


@njit(cache=True)
def _dual_iterate(T, xv, lo, hi, basis, is_basic, d, max_iter, ptol, ftol):
    """Bounded dual simplex from a dual feasible basis, in place.

    Returns (code, iterations) with codes as for ``_iterate`` plus 1 for
    primal infeasible.
    """
    m, N = T.shape
    it = 0
    degenerate_run = 0
    while True:
        # leaving row: largest bound violation, smallest basic index once stalling
        r = -1
        worst = ftol
        for i in range(m):
            b = basis[i]
            v = xv[b]
            if v < lo[b] - ftol:
                gap = lo[b] - v
            elif v > hi[b] + ftol:
                gap = v - hi[b]
            else:
                continue
            if degenerate_run > 50:
                if r < 0 or b < basis[r]:
                    r = i
            elif gap > worst:
                worst = gap
                r = i
        if r < 0:
            return 0, it
        if it >= max_iter:
            return 3, it
        b = basis[r]
        below = xv[b] < lo[b]
        target = lo[b] if below else hi[b]

        # dual ratio test
        q = -1
        best = np.inf
        for j in range(N):
            if is_basic[j] or lo[j] == hi[j]:
                continue
            a = T[r, j]
            if abs(a) <= ptol:
                continue
            at_lower = xv[j] <= lo[j] + 1e-12
            at_upper = xv[j] >= hi[j] - 1e-12
            free = not at_lower and not at_upper
            # x_b changes by -a * dx_j
            if below:
                ok = (a < 0 and (at_lower or free)) or (a > 0 and (at_upper or free))
            else:
                ok = (a > 0 and (at_lower or free)) or (a < 0 and (at_upper or free))
            if not ok:
                continue
            ratio = abs(d[j] / a)
            if ratio < best - 1e-12:
                best = ratio
                q = j
        if q < 0:
            return 1, it
        it += 1
        if best <= 1e-12:
            degenerate_run += 1
        else:
            degenerate_run = 0

        dx = (xv[b] - target) / T[r, q]
        for i in range(m):
            xv[basis[i]] -= T[i, q] * dx
        xv[q] += dx
        xv[b] = target

        piv = T[r, q]
        for j in range(N):
            T[r, j] /= piv
        for i in range(m):
            if i == r:
                continue
            f = T[i, q]
            if f != 0.0:
                for j in range(N):
                    T[i, j] -= f * T[r, j]
        dq = d[q]
        for j in range(N):
            d[j] -= dq * T[r, j]
        is_basic[b] = False
        is_basic[q] = True
        basis[r] = q


@njit(cache=True)
def _solve_kernel(c, A, senses, b, lb, ub, rule, max_iter, ptol, dtol, ftol, refine):
    """Two-phase solve from scratch.

    Returns (code, T, xv, lo, hi, basis, is_basic, d, iterations). Columns
    are structurals, then one slack per row, then artificials for the rows
    whose slack starts out of bounds.
    """
    m, n = A.shape
    lo0 = np.empty(n + m)
    hi0 = np.empty(n + m)
    x0 = np.zeros(n + m)
    lo0[:n] = lb
    hi0[:n] = ub
    for j in range(n):
        if np.isfinite(lb[j]):
            x0[j] = lb[j]
        elif np.isfinite(ub[j]):
            x0[j] = ub[j]
    resid = np.zeros(m)
    need = np.zeros(m, dtype=np.bool_)
    n_art = 0
    for i in range(m):
        s = n + i
        if senses[i] < 0:
            lo0[s], hi0[s] = 0.0, np.inf
        elif senses[i] > 0:
            lo0[s], hi0[s] = -np.inf, 0.0
        else:
            lo0[s], hi0[s] = 0.0, 0.0
        r = b[i]
        for j in range(n):
            r -= A[i, j] * x0[j]
        if lo0[s] - 1e-12 <= r <= hi0[s] + 1e-12:
            x0[s] = r
        else:
            sb = lo0[s] if r < lo0[s] else hi0[s]
            x0[s] = sb
            resid[i] = r - sb
            need[i] = True
            n_art += 1

    N = n + m + n_art
    T = np.zeros((m, N))
    lo = np.zeros(N)
    hi = np.zeros(N)
    xv = np.zeros(N)
    T[:, :n] = A
    lo[:n + m] = lo0
    hi[:n + m] = hi0
    xv[:n + m] = x0
    asign = np.ones(m)
    art_col = -np.ones(m, dtype=np.int64)
    basis = np.empty(m, dtype=np.int64)
    is_basic = np.zeros(N, dtype=np.bool_)
    cost1 = np.zeros(N)
    k = n + m
    for i in range(m):
        T[i, n + i] = 1.0
        if not need[i]:
            basis[i] = n + i
        else:
            sign = 1.0 if resid[i] > 0 else -1.0
            asign[i] = sign
            # basic column of the artificial is sign*e_i; scale row so it reads +e_i
            for j in range(n + m):
                T[i, j] *= sign
            T[i, k] = 1.0
            hi[k] = np.inf
            xv[k] = abs(resid[i])
            basis[i] = k
            cost1[k] = 1.0
            art_col[i] = k
            k += 1
        is_basic[basis[i]] = True

    iters = 0
    if n_art > 0:
        d = cost1.copy()
        for i in range(m):
            cb = cost1[basis[i]]
            if cb != 0.0:
                for j in range(N):
                    d[j] -= cb * T[i, j]
        code, it = _iterate(T, xv, lo, hi, basis, is_basic, d, cost1, rule, max_iter, ptol, dtol)
        iters += it
        if code == 3:
            return 3, T, xv, lo, hi, basis, is_basic, d, iters
        infeas = 0.0
        for j in range(n + m, N):
            infeas += xv[j]
        if infeas > ftol * 1e-2:
            return 1, T, xv, lo, hi, basis, is_basic, d, iters
        for j in range(n + m, N):
            hi[j] = 0.0
            if not is_basic[j]:
                xv[j] = 0.0
        # artificials that all left the basis are dead weight for every later pivot
        art_basic = False
        for i in range(m):
            if basis[i] >= n + m:
                art_basic = True
        if not art_basic:
            N = n + m
            T = T[:, :N].copy()
            lo = lo[:N].copy()
            hi = hi[:N].copy()
            xv = xv[:N].copy()
            is_basic = is_basic[:N].copy()

    cost2 = np.zeros(N)
    cost2[:n] = c
    d = cost2.copy()
    for i in range(m):
        cb = cost2[basis[i]]
        if cb != 0.0:
            for j in range(N):
                d[j] -= cb * T[i, j]
    code, it = _iterate(T, xv, lo, hi, basis, is_basic, d, cost2, rule, max_iter - iters, ptol, dtol)
    iters += it
    if code != 0 or not refine or m == 0:
        return code, T, xv, lo, hi, basis, is_basic, d, iters

    # recompute basic values from the original columns to shed drift
    M = np.zeros((m, N))
    M[:, :n] = A
    for i in range(m):
        M[i, n + i] = 1.0
        if 0 <= art_col[i] < N:
            M[i, art_col[i]] = asign[i]
    rhs = b.copy()
    for j in range(N):
        if not is_basic[j] and xv[j] != 0.0:
            for i in range(m):
                rhs[i] -= M[i, j] * xv[j]
    B = np.empty((m, m))
    for i in range(m):
        B[:, i] = M[:, basis[i]]
    xb = np.linalg.solve(B, rhs)
    for i in range(m):
        xv[basis[i]] = xb[i]
    return 0, T, xv, lo, hi, basis, is_basic, d, iters


@njit(cache=True)
def _fix_and_resolve(T, xv, lo, hi, basis, is_basic, d, fvars, fvals, max_iter, ptol, ftol):
    """Fix structurals ``fvars`` to ``fvals`` on a copy of an optimal state and re-optimize."""
    T = T.copy()
    xv = xv.copy()
    lo = lo.copy()
    hi = hi.copy()
    basis = basis.copy()
    is_basic = is_basic.copy()
    d = d.copy()
    for k in range(fvars.shape[0]):
        var = fvars[k]
        val = fvals[k]
        lo[var] = val
        hi[var] = val
        if not is_basic[var]:
            delta = val - xv[var]
            if delta != 0.0:
                for i in range(T.shape[0]):
                    xv[basis[i]] -= T[i, var] * delta
                xv[var] = val
    code, it = _dual_iterate(T, xv, lo, hi, basis, is_basic, d, max_iter, ptol, ftol)
    return code, T, xv, lo, hi, basis, is_basic, d, it


class LpState:
    """Final simplex tableau of an LP solve, reusable for warm starts."""

    __slots__ = ("T", "xv", "lo", "hi", "basis", "is_basic", "d", "n")

    def __init__(self, arrays, n):
        self.T, self.xv, self.lo, self.hi, self.basis, self.is_basic, self.d = arrays
        self.n = n

    @property
    def x(self):
        return self.xv[: self.n].copy()

    @property
    def nbytes(self):
        return self.T.nbytes + 8 * (4 * len(self.xv) + len(self.basis))

    def fix(self, var: int, val: float, options: SolverOptions):
        """Child state with ``var`` fixed; returns ``(Status, LpState, pivots)``."""
        return self.fix_many([var], [val], options)

    def fix_many(self, variables, values, options: SolverOptions):
        """Child state with several structurals fixed at once (dual simplex)."""
        code, *arrays, it = _fix_and_resolve(
            self.T, self.xv, self.lo, self.hi, self.basis, self.is_basic, self.d,
            np.asarray(variables, dtype=np.int64), np.asarray(values, dtype=np.float64),
            options.max_pivots, options.pivot_tol, options.feas_tol)
        return _STATUS[code], LpState(arrays, self.n), it


def _prepare(c, A, b):
    A = np.ascontiguousarray(A, dtype=np.float64).reshape(len(b), len(c))
    return np.asarray(c, dtype=np.float64), A


def solve_state(c, A, senses, b, lb, ub, options: SolverOptions | None = None,
                rule: int = BLAND, refine: bool = True):
    """Solve from scratch and keep the final tableau: ``(Status, LpState, pivots)``."""
    opts = options or SolverOptions()
    c, A = _prepare(c, A, b)
    code, *arrays, iters = _solve_kernel(
        c, A, np.asarray(senses, dtype=np.int64),
        np.asarray(b, dtype=np.float64), np.asarray(lb, dtype=np.float64),
        np.asarray(ub, dtype=np.float64), rule, opts.max_pivots, opts.pivot_tol,
        1e-9, opts.feas_tol, refine)
    return _STATUS[code], LpState(arrays, len(c)), iters


def solve_arrays(c, A, senses, b, lb, ub, options: SolverOptions | None = None, rule: int = BLAND):
    """Solve ``min c.x`` over ``A x (senses) b, lb <= x <= ub``.

    Returns ``(Status, x, pivots)``; ``x`` is meaningful only when optimal.
    """
    status, state, iters = solve_state(c, A, senses, b, lb, ub, options, rule)
    return status, state.x, iters


def solve_lp(model: MilpModel, options: SolverOptions | None = None, rule: int = BLAND) -> Solution:
    """Solve the LP relaxation of ``model`` (binaries relaxed to [0, 1])."""
    if model.num_vars == 0:
        raise ValueError("model has no variables")
    c, c0, A, senses, b, lb, ub = model.to_arrays()
    status, x, iters = solve_arrays(c, A, senses, b, lb, ub, options, rule)
    if status is not Status.OPTIMAL:
        return Solution(status, pivots=iters)
    values = {i: float(v) for i, v in enumerate(x)}
    return Solution(status, float(c @ x + c0), values, pivots=iters)
