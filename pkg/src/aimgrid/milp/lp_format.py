"""CPLEX-style LP text export, for cross-checking models with external solvers."""

from __future__ import annotations

import math
import re

from .model import MilpModel, Sense, VarKind

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _num(x: float) -> str:
    return format(x, ".12g")


def variable_names(model: MilpModel) -> list[str]:
    """LP-safe unique names: sanitized model name plus the variable id."""
    names = []
    for i, var in enumerate(model.variables):
        base = _BAD.sub("_", var.name) if var.name else "x"
        names.append(f"{base}_{i}" if var.name else f"x{i}")
    return names


def _terms(terms, names) -> str:
    parts = []
    for var, coef in sorted(terms.items()):
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = names[var] if mag == 1 else f"{_num(mag)} {names[var]}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[1:]


def export_lp_text(model: MilpModel) -> str:
    """Render ``model`` as an LP-format document.

    Sections: Minimize, Subject To (omitted when there are no constraints),
    Bounds, Binaries (omitted when there are none), End.
    """
    names = variable_names(model)
    lines = [f"\\ Problem: {model.name}", "Minimize"]
    obj = _terms(model.objective.terms, names)
    if model.objective.constant:
        obj += f" + {_num(model.objective.constant)}" if model.objective.constant > 0 \
            else f" - {_num(-model.objective.constant)}"
    lines.append(f" obj: {obj}")
    if model.constraints:
        lines.append("Subject To")
        op = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}
        for i, con in enumerate(model.constraints):
            rhs = con.rhs - con.expr.constant
            label = _BAD.sub("_", con.name) + f"_{i}" if con.name else f"c{i}"
            lines.append(f" {label}: {_terms(con.expr.terms, names)} {op[con.sense]} {_num(rhs)}")
    lines.append("Bounds")
    for i, var in enumerate(model.variables):
        if var.kind is VarKind.BINARY:
            continue
        lo, hi = var.lower, var.upper
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {names[i]} free")
        elif math.isinf(hi):
            lines.append(f" {names[i]} >= {_num(lo)}")
        elif math.isinf(lo):
            lines.append(f" -inf <= {names[i]} <= {_num(hi)}")
        else:
            lines.append(f" {_num(lo)} <= {names[i]} <= {_num(hi)}")
    bins = [names[i] for i in model.binaries]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {n}" for n in bins)
    lines.append("End")
    return "\n".join(lines) + "\n"
