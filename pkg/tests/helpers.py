"""Shared test helpers: random MILP generators and a brute-force oracle."""

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from aimgrid.milp import LinExpr, MilpModel, Sense, VarKind


def random_schedule_milp(rng, max_jobs=6, max_binaries=8):
    """Disjunctive access-time model built directly, without the scheduler.

    Jobs on two phases; each has a time window, an absolute deviation
    slack, same-phase chain headways and big-M separation across phases.
    The last job in distance order closes the makespan.
    """
    while True:
        n = int(rng.integers(2, max_jobs + 1))
        phase = rng.integers(0, 2, size=n)
        cross = int(np.sum(phase == 0) * np.sum(phase == 1))
        if cross <= max_binaries:
            break
    g1 = float(rng.uniform(0.5, 3.0))
    g2 = float(rng.uniform(2.0, 8.0))
    horizon = 80.0
    M = horizon + g2
    lo = np.sort(rng.uniform(0.0, 30.0, size=n))
    des = lo + rng.uniform(0.0, 10.0, size=n)
    w1, w2 = float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.1, 2.0))
    m = MilpModel("random_schedule")
    t = [m.add_variable(VarKind.CONTINUOUS, float(lo[i]), horizon) for i in range(n)]
    e = [m.add_variable(VarKind.CONTINUOUS, 0.0, math.inf) for _ in range(n)]
    for i in range(n):
        m.add_constraint(LinExpr({e[i]: 1, t[i]: -1}), Sense.GE, -float(des[i]))
        m.add_constraint(LinExpr({e[i]: 1, t[i]: 1}), Sense.GE, float(des[i]))
    last = {}
    for i in range(n):
        p = int(phase[i])
        if p in last:
            m.add_constraint(LinExpr({t[i]: 1, t[last[p]]: -1}), Sense.GE, g1)
        last[p] = i
    for i in range(n):
        for j in range(i + 1, n):
            if phase[i] == phase[j]:
                continue
            y = m.add_variable(VarKind.BINARY, 0, 1)
            m.add_constraint(LinExpr({t[i]: 1, t[j]: -1, y: -M}), Sense.GE, g2 - M)
            m.add_constraint(LinExpr({t[j]: 1, t[i]: -1, y: M}), Sense.GE, g2)
    for i in range(n - 1):
        m.add_constraint(LinExpr({t[n - 1]: 1, t[i]: -1}), Sense.GE, 0.0)
    obj = LinExpr({t[n - 1]: w1})
    for i in range(n):
        obj = obj + LinExpr({e[i]: w2})
    m.set_objective(obj)
    return m


def random_generic_milp(rng, max_cont=6, max_bin=5):
    """Small bounded MILP with random dense rows; may be infeasible."""
    nc = int(rng.integers(1, max_cont + 1))
    nb = int(rng.integers(1, max_bin + 1))
    m = MilpModel("random_generic")
    xs = [m.add_variable(VarKind.CONTINUOUS, float(rng.uniform(-5, 0)), float(rng.uniform(0, 10)))
          for _ in range(nc)]
    ys = [m.add_variable(VarKind.BINARY, 0, 1) for _ in range(nb)]
    allv = xs + ys
    for _ in range(int(rng.integers(1, 7))):
        coefs = np.round(rng.normal(size=len(allv)), 3)
        sense = [Sense.LE, Sense.GE, Sense.EQ][int(rng.choice(3, p=[0.6, 0.3, 0.1]))]
        rhs = float(np.round(rng.uniform(-3, 6), 3))
        m.add_constraint(LinExpr(dict(zip(allv, coefs.tolist()))), sense, rhs)
    m.set_objective(LinExpr(dict(zip(allv, np.round(rng.normal(size=len(allv)), 3).tolist()))))
    return m


def _linprog(c, A, senses, b, lb, ub):
    le = senses < 0
    ge = senses > 0
    eq = senses == 0
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([b[le], -b[ge]])
    kw = {}
    if A_ub.shape[0]:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if eq.any():
        kw.update(A_eq=A[eq], b_eq=b[eq])
    bounds = [(None if math.isinf(l) else l, None if math.isinf(u) else u) for l, u in zip(lb, ub)]
    return linprog(c, bounds=bounds, method="highs", **kw)


def lp_oracle(model):
    """(status, objective) of the LP relaxation from scipy's HiGHS."""
    c, c0, A, senses, b, lb, ub = model.relaxed().to_arrays()
    r = _linprog(c, A, senses, b, lb, ub)
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(r.status, "other"), \
        (r.fun + c0 if r.status == 0 else math.nan)


def brute_force(model):
    """Best objective over every 0/1 fixing of the binaries (None if infeasible)."""
    c, c0, A, senses, b, lb, ub = model.to_arrays()
    bins = model.binaries
    best = None
    for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lb.copy(), ub.copy()
        lo[bins] = combo
        hi[bins] = combo
        r = _linprog(c, A, senses, b, lo, hi)
        if r.status == 0:
            val = r.fun + c0
            best = val if best is None else min(best, val)
    return best


def cross_phase_overlaps(result, tol=1e-9):
    """Pairs of opposite-phase vehicles inside the same box at once, from the event log."""
    ev = result.events
    cors = result.config.topology.corridors
    phase = np.array([0 if cors[c].phase == "O" else 1 for c in result.vehicles["corridor"]])
    bad = 0
    for ident in np.unique(ev["intersection"]):
        sel = (ev["intersection"] == ident) & ~np.isnan(ev["t_enter"])
        lo = ev["t_enter"][sel]
        hi = np.where(np.isnan(ev["t_exit"][sel]), np.inf, ev["t_exit"][sel])
        ph = phase[ev["vehicle"][sel]]
        order = np.argsort(lo, kind="stable")
        lo, hi, ph = lo[order], hi[order], ph[order]
        for k in range(len(lo)):
            later = lo[k + 1:]
            clash = (later < hi[k] - tol) & (ph[k + 1:] != ph[k])
            bad += int(np.count_nonzero(clash))
    return bad


def min_bumper_gap(result):
    """Smallest rear-to-front gap between consecutive vehicles over all samples."""
    d = result.store.data
    if len(d["vehicle"]) == 0:
        return math.inf
    corr = result.vehicles["corridor"][d["vehicle"]]
    length = result.config.vehicle_length
    key = np.lexsort((d["position"], corr, d["time"]))
    t, c, x = d["time"][key], corr[key], d["position"][key]
    same = (t[1:] == t[:-1]) & (c[1:] == c[:-1])
    gaps = x[1:] - length - x[:-1]
    return float(gaps[same].min()) if same.any() else math.inf
