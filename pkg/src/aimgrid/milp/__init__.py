"""Small self-contained MILP solver: bounded simplex + branch-and-bound."""

from .branch_bound import solve_milp
from .lp_format import export_lp_text
from .model import (
    FEAS_TOL,
    Constraint,
    LinExpr,
    MilpModel,
    ModelError,
    Sense,
    Solution,
    SolverOptions,
    Status,
    Variable,
    VarId,
    VarKind,
)
from .simplex import BLAND, DANTZIG, solve_lp

__all__ = [
    "BLAND", "DANTZIG", "FEAS_TOL", "Constraint", "LinExpr", "MilpModel", "ModelError",
    "Sense", "Solution", "SolverOptions", "Status", "Variable", "VarId", "VarKind",
    "export_lp_text", "solve_lp", "solve_milp",
]
