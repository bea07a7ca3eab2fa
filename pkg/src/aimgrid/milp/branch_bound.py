"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import math
from typing import Mapping

import numpy as np

from .model import MilpModel, SolverOptions, Solution, Status
from .simplex import BLAND, solve_arrays, solve_lp, solve_state


def _most_fractional(x, binaries, tol):
    """Index of the binary with fractional part closest to 0.5 (lowest id on ties)."""
    best_var, best_score = -1, tol
    for var in binaries:
        frac = x[var] - math.floor(x[var])
        score = min(frac, 1.0 - frac)
        if score > best_score + 1e-12:
            best_var, best_score = var, score
    return best_var


def solve_milp(model: MilpModel, options: SolverOptions | None = None, rule: int = BLAND,
               start: Mapping[int, float] | None = None) -> Solution:
    """Solve ``model`` to optimality.

    Node selection is best lower bound with FIFO tie-breaking; branching is on
    the most fractional binary. Each child LP is solved when created so that
    the queue is keyed on the child's own bound. With ``options.warm_start``
    a child is re-optimized by dual simplex from its parent's final tableau;
    the incumbent is polished by one cold LP solve with its binaries fixed.

    ``start`` optionally maps binary VarIds to 0/1; the LP with those
    binaries fixed seeds the incumbent (ignored when it is infeasible).

    Returns a :class:`Solution`. ``Status.ITERATION_LIMIT`` is returned when
    an LP relaxation hits the pivot cap or ``options.max_nodes`` is exceeded;
    in the latter case the best incumbent (if any) is attached.
    """
    opts = options or SolverOptions()
    binaries = model.binaries
    if not binaries:
        return solve_lp(model, opts, rule)
    if model.num_vars == 0:
        raise ValueError("model has no variables")

    c, c0, A, senses, b, lb0, ub0 = model.to_arrays()
    pivots = 0

    def cold(lb, ub):
        nonlocal pivots
        status, state, k = solve_state(c, A, senses, b, lb, ub, opts, rule, refine=not opts.warm_start)
        pivots += k
        return status, state

    def child(parent, lb, ub, var, val):
        nonlocal pivots
        if parent is None:
            return cold(lb, ub)
        status, state, k = parent.fix(var, val, opts)
        pivots += k
        if status is Status.ITERATION_LIMIT:
            # numerical trouble in the dual pass; fall back to a cold solve
            return cold(lb, ub)
        return status, state

    status, root = cold(lb0, ub0)
    if status is not Status.OPTIMAL:
        return Solution(status, pivots=pivots, nodes=1)

    counter = itertools.count()
    incumbent = None
    best = math.inf
    nodes = 1
    heap = []
    held = 0  # bytes of tableaux stored on the queue

    def consider(lb, ub, state):
        nonlocal incumbent, best, held
        x = state.x
        bound = float(c @ x)
        if bound >= best - opts.obj_tol:
            return
        var = _most_fractional(x, binaries, opts.int_tol)
        if var < 0:
            incumbent, best = x, bound
            return
        keep = None
        if opts.warm_start and held + state.nbytes <= opts.state_budget_bytes:
            keep = state
            held += state.nbytes
        heapq.heappush(heap, (bound, next(counter), var, lb, ub, keep))

    if start:
        fvars = sorted(start)
        fvals = [float(round(start[v])) for v in fvars]
        if opts.warm_start:
            st, sstate, k = root.fix_many(fvars, fvals, opts)
            xs = sstate.x
        else:
            st = Status.ITERATION_LIMIT
            k = 0
        if st is Status.ITERATION_LIMIT:
            slb, sub = lb0.copy(), ub0.copy()
            slb[fvars] = sub[fvars] = fvals
            st, xs, k2 = solve_arrays(c, A, senses, b, slb, sub, opts, rule)
            k += k2
        pivots += k
        if st is Status.OPTIMAL and _most_fractional(xs, binaries, opts.int_tol) < 0:
            incumbent, best = xs, float(c @ xs)

    consider(lb0.copy(), ub0.copy(), root)
    while heap:
        bound, _, var, lb, ub, state = heapq.heappop(heap)
        if state is not None:
            held -= state.nbytes
        if bound >= best - opts.obj_tol:
            break
        if state is None and opts.warm_start:
            status, state = cold(lb, ub)
            if status is not Status.OPTIMAL:
                state = None
        for val in (0.0, 1.0):
            if opts.max_nodes is not None and nodes >= opts.max_nodes:
                return _finish(model, incumbent, binaries, Status.ITERATION_LIMIT, nodes, pivots, opts, rule)
            clb, cub = lb.copy(), ub.copy()
            clb[var] = cub[var] = val
            nodes += 1
            status, cstate = child(state, clb, cub, var, val)
            if status is Status.INFEASIBLE:
                continue
            if status is not Status.OPTIMAL:
                # an unbounded child cannot occur once the root is bounded
                return Solution(status, nodes=nodes, pivots=pivots)
            consider(clb, cub, cstate)

    if incumbent is None:
        return Solution(Status.INFEASIBLE, nodes=nodes, pivots=pivots)
    return _finish(model, incumbent, binaries, Status.OPTIMAL, nodes, pivots, opts, rule)


def _clean(x, A, senses, b, lb, ub, tol):
    """True when ``x`` meets every row and bound within ``tol``."""
    if np.any(x < lb - tol) or np.any(x > ub + tol):
        return False
    if len(b) == 0:
        return True
    r = A @ x - b
    viol = np.where(senses < 0, r, np.where(senses > 0, -r, np.abs(r)))
    return bool(np.all(viol <= tol))


def _finish(model, x, binaries, status, nodes, pivots, opts, rule):
    if x is None:
        return Solution(status, nodes=nodes, pivots=pivots)
    x = np.array(x, dtype=float)
    x[binaries] = np.round(x[binaries])
    c, _, A, senses, b, lb, ub = model.to_arrays()
    if opts.warm_start and not _clean(x, A, senses, b, lb, ub, opts.feas_tol * 1e-2):
        # polish: re-solve the continuous part cold with the binaries fixed
        lb[binaries] = ub[binaries] = x[binaries]
        st, xp, k = solve_arrays(c, A, senses, b, lb, ub, opts, rule)
        pivots += k
        if st is Status.OPTIMAL:
            xp[binaries] = x[binaries]
            x = xp
    values = {i: float(v) for i, v in enumerate(x)}
    return Solution(status, model.objective.evaluate(values), values, nodes=nodes, pivots=pivots)
