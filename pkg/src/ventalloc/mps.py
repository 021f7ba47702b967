"""MPS (fixed and free format) and CPLEX-LP exports, plus an MPS reader.

Exports are bit-stable: variables and rows are emitted in model order, so
two exports of the same model diff clean. Fixed-format MPS caps names at 8
characters, so it writes positional aliases (X0000001, R0000001) with the
real names recoverable from the free-format export of the same model. The
reader is deliberately independent of the writer's internals and parses
both layouts by token; it exists so re-imports can be checked against the
model census.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .milp import MilpModel

_SENSE_TO_ROW = {"<=": "L", ">=": "G", "=": "E"}
INF = float("inf")


def _fixed_num(v: float) -> str:
    """A numeral that fits the 12-character fixed-format value field."""
    for spec in (".10g", ".8g", ".6g", ".5g"):
        s = format(v, spec)
        if len(s) <= 12:
            return s
    return format(v, ".4g")


def _alias(prefix: str, i: int) -> str:
    return f"{prefix}{i + 1:07d}"


def write_mps(model: MilpModel, fixed: bool = True, name: str = "VENTALLOC") -> str:
    """Render the model as MPS text; fixed=False uses free format (full names)."""
    var_name = (lambda j: _alias("X", j)) if fixed else \
        (lambda j: model.variables[j].name)
    row_name = (lambda i: _alias("R", i)) if fixed else \
        (lambda i: model.constraints[i].name)
    num = _fixed_num if fixed else (lambda v: format(v, ".17g"))

    def fx(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
        if fixed:
            line = f" {f1:<2} {f2:<8}"
            if f3:
                line = f"{line:<14}{f3:<8}"
            if f4:
                line = f"{line:<24}{f4:>12}"
            if f5:
                line = f"{line:<39}{f5:<8}"
            if f6:
                line = f"{line:<49}{f6:>12}"
            return line.rstrip()
        return " " + " ".join(p for p in (f1, f2, f3, f4, f5, f6) if p)

    out: list[str] = [f"NAME          {name}"]
    out.append("ROWS")
    out.append(" N  COST")
    for i, con in enumerate(model.constraints):
        out.append(f" {_SENSE_TO_ROW[con.sense]}  {row_name(i)}")

    # column-major coefficient lists
    col_terms: list[list[tuple[int, float]]] = [[] for _ in range(model.n_vars)]
    for i, con in enumerate(model.constraints):
        for idx, coef in con.terms:
            col_terms[idx].append((i, coef))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(model.variables):
        is_int = var.kind in ("integer", "binary")
        if is_int and not in_int:
            out.append(fx("", f"MARK{marker:04d}", "'MARKER'", "", "'INTORG'"))
            marker += 1
            in_int = True
        elif not is_int and in_int:
            out.append(fx("", f"MARK{marker:04d}", "'MARKER'", "", "'INTEND'"))
            marker += 1
            in_int = False
        entries: list[tuple[str, float]] = []
        obj = model.objective.get(j, 0.0)
        if obj != 0.0:
            entries.append(("COST", obj))
        entries += [(row_name(i), coef) for i, coef in col_terms[j]]
        if not entries:
            entries.append(("COST", 0.0))   # keep empty columns declared
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            if len(pair) == 2:
                out.append(fx("", var_name(j), pair[0][0], num(pair[0][1]),
                              pair[1][0], num(pair[1][1])))
            else:
                out.append(fx("", var_name(j), pair[0][0], num(pair[0][1])))
    if in_int:
        out.append(fx("", f"MARK{marker:04d}", "'MARKER'", "", "'INTEND'"))

    out.append("RHS")
    for i, con in enumerate(model.constraints):
        if con.rhs != 0.0:
            out.append(fx("", "RHS", row_name(i), num(con.rhs)))

    out.append("BOUNDS")
    for j, var in enumerate(model.variables):
        lo, hi = var.lower, var.upper
        if var.kind == "binary" and lo == 0.0 and hi == 1.0:
            out.append(fx("BV", "BND", var_name(j)))
            continue
        if lo == hi:
            out.append(fx("FX", "BND", var_name(j), num(lo)))
            continue
        if lo == -INF and hi == INF:
            out.append(fx("FR", "BND", var_name(j)))
            continue
        if lo == -INF:
            out.append(fx("MI", "BND", var_name(j)))
        elif lo != 0.0:
            out.append(fx("LO", "BND", var_name(j), num(lo)))
        if hi != INF:
            out.append(fx("UP", "BND", var_name(j), num(hi)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_lp(model: MilpModel, name: str = "ventalloc") -> str:
    """CPLEX-LP-format text with full variable and row names."""
    def num(v: float) -> str:
        return format(v, ".17g")

    def expr(terms) -> str:
        parts = []
        for idx, coef in terms:
            vn = model.variables[idx].name
            sign = "-" if coef < 0 else "+"
            parts.append(f"{sign} {num(abs(coef))} {vn}")
        if not parts:
            return "0 " + model.variables[0].name if model.variables else "0"
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else text

    out = [f"\\Problem name: {name}", "Minimize"]
    obj_terms = sorted(model.objective.items())
    out.append(" obj: " + expr(obj_terms))
    out.append("Subject To")
    for con in model.constraints:
        op = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
        out.append(f" {con.name}: {expr(con.terms)} {op} {num(con.rhs)}")
    out.append("Bounds")
    for var in model.variables:
        lo, hi = var.lower, var.upper
        if lo == hi:
            out.append(f" {var.name} = {num(lo)}")
        elif lo == -INF and hi == INF:
            out.append(f" {var.name} free")
        elif lo == -INF:
            out.append(f" -inf <= {var.name} <= {num(hi)}")
        elif hi == INF:
            if lo != 0.0:
                out.append(f" {num(lo)} <= {var.name}")
        else:
            out.append(f" {num(lo)} <= {var.name} <= {num(hi)}")
    generals = [v.name for v in model.variables if v.kind == "integer"]
    binaries = [v.name for v in model.variables if v.kind == "binary"]
    if generals:
        out.append("Generals")
        out.extend(f" {n}" for n in generals)
    if binaries:
        out.append("Binaries")
        out.extend(f" {n}" for n in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


@dataclass
class ParsedMps:
    """Model skeleton recovered from MPS text."""

    name: str = ""
    objective_row: str = ""
    rows: dict[str, str] = field(default_factory=dict)          # name -> sense
    rhs: dict[str, float] = field(default_factory=dict)
    columns: dict[str, dict[str, float]] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)         # name -> kind
    lower: dict[str, float] = field(default_factory=dict)
    upper: dict[str, float] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for kind in self.kinds.values():
            counts[kind] = counts.get(kind, 0) + 1
        return counts


def read_mps(text: str) -> ParsedMps:
    """Parse MPS text (fixed or free format) by tokens."""
    parsed = ParsedMps()
    section = ""
    integer_mode = False
    row_sense = {"L": "<=", "G": ">=", "E": "="}
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        head = raw[:1] != " " and raw[:1] != "\t"
        tokens = raw.split()
        if head:
            keyword = tokens[0].upper()
            if keyword in ("NAME",):
                parsed.name = tokens[1] if len(tokens) > 1 else ""
                continue
            if keyword in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"):
                section = keyword
                continue
            raise ValueError(f"unknown MPS section line: {raw!r}")
        if section == "ROWS":
            sense, name = tokens[0].upper(), tokens[1]
            if sense == "N":
                if not parsed.objective_row:
                    parsed.objective_row = name
            else:
                parsed.rows[name] = row_sense[sense]
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                integer_mode = tokens[-1] == "'INTORG'"
                continue
            col = tokens[0]
            if col not in parsed.columns:
                parsed.columns[col] = {}
                parsed.kinds[col] = "integer" if integer_mode else "continuous"
                parsed.lower[col] = 0.0
                parsed.upper[col] = INF
            for k in range(1, len(tokens) - 1, 2):
                row, value = tokens[k], float(tokens[k + 1])
                if row != parsed.objective_row and row not in parsed.rows:
                    raise ValueError(f"column {col} references unknown row {row}")
                parsed.columns[col][row] = value
        elif section == "RHS":
            for k in range(1, len(tokens) - 1, 2):
                parsed.rhs[tokens[k]] = float(tokens[k + 1])
        elif section == "BOUNDS":
            btype = tokens[0].upper()
            col = tokens[2]
            if col not in parsed.columns:
                raise ValueError(f"bound on unknown column {col}")
            value = float(tokens[3]) if len(tokens) > 3 else math.nan
            if btype == "UP":
                parsed.upper[col] = value
            elif btype == "LO":
                parsed.lower[col] = value
            elif btype == "FX":
                parsed.lower[col] = value
                parsed.upper[col] = value
            elif btype == "FR":
                parsed.lower[col] = -INF
                parsed.upper[col] = INF
            elif btype == "MI":
                parsed.lower[col] = -INF
            elif btype == "PL":
                parsed.upper[col] = INF
            elif btype == "BV":
                parsed.kinds[col] = "binary"
                parsed.lower[col] = 0.0
                parsed.upper[col] = 1.0
            else:
                raise ValueError(f"unsupported bound type {btype}")
        elif section == "RANGES":
            raise ValueError("RANGES section not supported")
    if section != "ENDATA":
        raise ValueError("missing ENDATA")
    return parsed
