"""Model containers for small minimize-only mixed-integer linear programs."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

VarId = int

FEAS_TOL = 1e-6


class ModelError(ValueError):
    """Raised for malformed models (bad bounds, unknown variables)."""


class VarKind(enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class Variable:
    kind: VarKind
    lower: float
    upper: float
    name: str = ""


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + constant``.

    Terms are kept in a dict keyed by variable id, so duplicate ids are
    merged on construction. Supports ``+``, ``-`` and scalar ``*``.
    """

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Union[Mapping[VarId, float], Iterable[Tuple[VarId, float]], None] = None,
                 constant: float = 0.0):
        self.terms: Dict[VarId, float] = {}
        self.constant = float(constant)
        if terms is None:
            return
        if type(terms) is dict:
            for var, coef in terms.items():
                self.terms[var] = float(coef)
            return
        items = terms.items() if isinstance(terms, Mapping) else terms
        for var, coef in items:
            self.terms[var] = self.terms.get(var, 0.0) + float(coef)

    @classmethod
    def var(cls, var: VarId, coef: float = 1.0) -> "LinExpr":
        return cls({var: coef})

    def copy(self) -> "LinExpr":
        out = LinExpr.__new__(LinExpr)
        out.terms = dict(self.terms)
        out.constant = self.constant
        return out

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinExpr):
            for var, coef in other.terms.items():
                out.terms[var] = out.terms.get(var, 0.0) + coef
            out.constant += other.constant
        else:
            out.constant += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({v: -c for v, c in self.terms.items()}, -self.constant)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar: float):
        s = float(scalar)
        return LinExpr({v: c * s for v, c in self.terms.items()}, self.constant * s)

    __rmul__ = __mul__

    def evaluate(self, values: Mapping[VarId, float]) -> float:
        return self.constant + sum(c * values[v] for v, c in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{c:g}*x{v}" for v, c in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.constant:g})"


@dataclass
class Constraint:
    expr: LinExpr
    sense: Sense
    rhs: float
    name: str = ""

    def residual(self, values: Mapping[VarId, float]) -> float:
        """Amount by which the constraint is violated (0 when satisfied)."""
        lhs = self.expr.evaluate(values)
        if self.sense is Sense.LE:
            return max(0.0, lhs - self.rhs)
        if self.sense is Sense.GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class Solution:
    status: Status
    objective: float = math.nan
    values: Dict[VarId, float] = field(default_factory=dict)
    nodes: int = 0
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, var: VarId) -> float:
        return self.values[var]


@dataclass
class SolverOptions:
    """Tolerances and limits shared by the LP and branch-and-bound layers."""

    feas_tol: float = FEAS_TOL
    int_tol: float = FEAS_TOL
    obj_tol: float = 1e-6
    pivot_tol: float = 1e-9
    max_pivots: int = 10_000
    max_nodes: Optional[int] = None
    # child relaxations are re-optimized from the parent's tableau (dual simplex)
    warm_start: bool = True
    # memory budget for tableaux kept on queued nodes; beyond it nodes are re-solved cold
    state_budget_bytes: int = 512 * 2**20


class MilpModel:
    """A minimize-only MILP with continuous and binary variables.

    >>> m = MilpModel()
    >>> x = m.add_variable(VarKind.CONTINUOUS, 0, 10)
    >>> _ = m.add_constraint(LinExpr.var(x), Sense.GE, 2)
    >>> m.set_objective(LinExpr.var(x))
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective = LinExpr()

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def binaries(self) -> List[VarId]:
        return [i for i, v in enumerate(self.variables) if v.kind is VarKind.BINARY]

    def add_variable(self, kind: VarKind = VarKind.CONTINUOUS, lower: float = 0.0,
                     upper: float = math.inf, name: str = "") -> VarId:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            if (lower, upper) not in ((0.0, 1.0), (0, 1)):
                raise ModelError(f"binary variable needs bounds (0, 1), got ({lower}, {upper})")
            lower, upper = 0.0, 1.0
        lower, upper = float(lower), float(upper)
        if math.isnan(lower) or math.isnan(upper):
            raise ModelError("variable bounds must not be NaN")
        if lower > upper:
            raise ModelError(f"lower bound {lower} exceeds upper bound {upper}")
        self.variables.append(Variable(kind, lower, upper, name))
        return len(self.variables) - 1

    def _check_expr(self, expr: LinExpr) -> None:
        n = len(self.variables)
        for var in expr.terms:
            if not (isinstance(var, (int, np.integer)) and 0 <= var < n):
                raise ModelError(f"unknown variable id {var!r}")

    def add_constraint(self, expr: LinExpr, sense: Union[Sense, str], rhs: float,
                       name: str = "") -> int:
        """Append ``expr (sense) rhs``; returns the constraint index."""
        self._check_expr(expr)
        if type(sense) is not Sense:
            sense = Sense(sense)
        self.constraints.append(Constraint(expr.copy(), sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, expr: LinExpr) -> None:
        self._check_expr(expr)
        self.objective = expr.copy()

    def relaxed(self) -> "MilpModel":
        """Copy with every binary turned into a continuous [0, 1] variable."""
        out = MilpModel(self.name)
        out.variables = [Variable(VarKind.CONTINUOUS, v.lower, v.upper, v.name) for v in self.variables]
        out.constraints = list(self.constraints)
        out.objective = self.objective
        return out

    def to_arrays(self):
        """Dense arrays ``(c, c0, A, senses, b, lb, ub)`` for the LP engine.

        ``senses`` is an int array: -1 for <=, +1 for >=, 0 for =. Expression
        constants are moved to the right-hand side.
        """
        n, m = len(self.variables), len(self.constraints)
        c = np.zeros(n)
        for v, coef in self.objective.terms.items():
            c[v] = coef
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = np.zeros(m, dtype=np.int64)
        code = {Sense.LE: -1, Sense.GE: 1, Sense.EQ: 0}
        for i, con in enumerate(self.constraints):
            for v, coef in con.expr.terms.items():
                A[i, v] = coef
            b[i] = con.rhs - con.expr.constant
            senses[i] = code[con.sense]
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return c, self.objective.constant, A, senses, b, lb, ub

    def max_violation(self, values: Mapping[VarId, float]) -> float:
        """Largest constraint or bound violation at ``values``."""
        worst = 0.0
        for con in self.constraints:
            worst = max(worst, con.residual(values))
        for i, var in enumerate(self.variables):
            x = values[i]
            worst = max(worst, var.lower - x, x - var.upper)
        return worst
