"""LP and MPS text emission, plus a reader for the LP dialect we write."""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Iterable, Mapping

from .model import Constraint, MipModel, ModelError, Variable

_UNSAFE = re.compile(r"[^A-Za-z0-9_.]")
_TERMS_PER_LINE = 6


def sanitize(name: str) -> str:
    """Map a name onto the portable LP/MPS charset ``[A-Za-z0-9_.]``.

    A leading digit or period gets an ``n`` prefix.
    """
    out = _UNSAFE.sub("_", name)
    if not out or out[0].isdigit() or out[0] == ".":
        out = "n" + out
    return out[:255]


def name_map(model: MipModel) -> dict[str, str]:
    """Model name -> file name for variables and rows; raises on collisions."""
    out: dict[str, str] = {}
    for kind, names in (("variable", [v.name for v in model.variables]),
                        ("constraint", [c.name for c in model.constraints])):
        seen: dict[str, str] = {}
        for n in names:
            s = sanitize(n)
            if s in seen and seen[s] != n:
                raise ModelError(f"{kind} names {seen[s]!r} and {n!r} collide as {s!r}")
            seen[s] = n
            out[n] = s
    return out


def fmt(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _expr(terms: Iterable[tuple[str, float]], names: Mapping[str, str]) -> list[str]:
    chunks = []
    for k, (v, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = names[v] if mag == 1 else f"{fmt(mag)} {names[v]}"
        if k == 0:
            chunks.append(("-" if c < 0 else "") + body)
        else:
            chunks.append(f"{sign} {body}")
    if not chunks:
        chunks.append("0 " + next(iter(names.values()), "x"))
    lines = []
    for k in range(0, len(chunks), _TERMS_PER_LINE):
        lines.append(" ".join(chunks[k : k + _TERMS_PER_LINE]))
    return lines


def write_lp(model: MipModel) -> str:
    names = name_map(model)
    out = [f"\\ Problem name: {sanitize(model.name)}", ""]
    out.append("Minimize" if model.sense == "min" else "Maximize")
    obj = _expr(model.objective, names) if model.objective else [f"0 {names[model.variables[0].name]}"]
    out.append(" obj: " + obj[0])
    out.extend("   " + line for line in obj[1:])
    out.append("Subject To")
    for c in model.constraints:
        body = _expr(c.terms, names) if c.terms else [f"0 {names[model.variables[0].name]}"]
        rhs = f" {c.sense} {fmt(c.rhs)}"
        if len(body) == 1:
            out.append(f" {names[c.name]}: {body[0]}{rhs}")
        else:
            out.append(f" {names[c.name]}: {body[0]}")
            out.extend("   " + line for line in body[1:-1])
            out.append("   " + body[-1] + rhs)
    out.append("Bounds")
    for v in model.variables:
        if v.kind == "binary":
            continue
        n = names[v.name]
        if v.lb == v.ub:
            out.append(f" {n} = {fmt(v.lb)}")
        elif math.isinf(v.lb) and math.isinf(v.ub):
            out.append(f" {n} free")
        elif math.isinf(v.ub):
            out.append(f" {n} >= {fmt(v.lb)}")
        else:
            out.append(f" {fmt(v.lb)} <= {n} <= {fmt(v.ub)}")
    binaries = [names[v.name] for v in model.variables if v.kind == "binary"]
    if binaries:
        out.append("Binaries")
        for k in range(0, len(binaries), 8):
            out.append(" " + " ".join(binaries[k : k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


def _mps_line(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # fixed-form field columns 2, 5, 15, 25, 40, 50; wider names push fields right
    line = f" {f1:<2} {f2:<8}"
    if f3:
        line += f"  {f3:<8}  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def write_mps(model: MipModel) -> str:
    names = name_map(model)
    out = [f"NAME          {sanitize(model.name)}"]
    if model.sense == "max":
        out += ["OBJSENSE", "    MAX"]
    out.append("ROWS")
    out.append(_mps_line("N", "obj"))
    kind = {"<=": "L", ">=": "G", "=": "E"}
    for c in model.constraints:
        out.append(_mps_line(kind[c.sense], names[c.name]))
    col_entries: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for v, a in model.objective:
        col_entries[v].append(("obj", a))
    for c in model.constraints:
        for v, a in c.terms:
            col_entries[v].append((names[c.name], a))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for v in model.variables:
        is_int = v.kind == "binary"
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(f"    MARKER{marker:04d}  'MARKER'                 {tag}")
            marker += 1
            in_int = is_int
        entries = col_entries[v.name] or [("obj", 0.0)]
        for k in range(0, len(entries), 2):
            pair = entries[k : k + 2]
            f5, f6 = (pair[1][0], fmt(pair[1][1])) if len(pair) > 1 else ("", "")
            out.append(_mps_line("", names[v.name], pair[0][0], fmt(pair[0][1]), f5, f6))
    if in_int:
        out.append(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'")
    out.append("RHS")
    rhs = [(names[c.name], c.rhs) for c in model.constraints if c.rhs != 0.0]
    for k in range(0, len(rhs), 2):
        pair = rhs[k : k + 2]
        f5, f6 = (pair[1][0], fmt(pair[1][1])) if len(pair) > 1 else ("", "")
        out.append(_mps_line("", "RHS", pair[0][0], fmt(pair[0][1]), f5, f6))
    out.append("BOUNDS")
    for v in model.variables:
        n = names[v.name]
        if v.kind == "binary":
            out.append(_mps_line("BV", "BND", n))
            continue
        if v.lb == v.ub:
            out.append(_mps_line("FX", "BND", n, fmt(v.lb)))
            continue
        if math.isinf(v.lb) and v.lb < 0:
            out.append(_mps_line("MI", "BND", n))
        elif v.lb != 0.0:
            out.append(_mps_line("LO", "BND", n, fmt(v.lb)))
        if not math.isinf(v.ub):
            out.append(_mps_line("UP", "BND", n, fmt(v.ub)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_model(model: MipModel, fmt_name: str, out: str | Path) -> None:
    if fmt_name == "lp":
        text = write_lp(model)
    elif fmt_name == "mps":
        text = write_mps(model)
    else:
        raise ValueError(f"unknown model format {fmt_name!r}")
    Path(out).write_text(text)


# --------------------------------------------------------------------------
# LP reader

_SECTION = {
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_TOKEN = re.compile(
    r"\s*(<=|>=|=<|=>|<|>|=|(?:\d+\.?\d*|\.\d+)[eE][+-]?\d+|[+-]|[A-Za-z_][^\s:+\-<>=]*:|[^\s+\-<>=:]+)"
)
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|inf|infinity)$", re.I)


class LPParseError(ModelError):
    pass


def _num(tok: str) -> float:
    low = tok.lower()
    if low in ("inf", "infinity", "+inf", "+infinity"):
        return math.inf
    if low in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def _tokens(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise LPParseError(f"cannot tokenize near {text[pos:pos + 20]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


def _linear(toks: list[str], k: int, stop: set[str]) -> tuple[list[tuple[str, float]], int]:
    terms: list[tuple[str, float]] = []
    sign = 1.0
    coef: float | None = None
    while k < len(toks) and toks[k] not in stop and not toks[k].endswith(":"):
        tok = toks[k]
        if tok in "+-":
            sign = -sign if tok == "-" else sign
        elif _NUMBER.match(tok):
            coef = _num(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        k += 1
    return terms, k


def read_lp(text: str) -> MipModel:
    """Parse CPLEX-style LP text into a :class:`MipModel`."""
    sections: list[tuple[str, list[str]]] = []
    name = "model"
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0] if not raw.lstrip().startswith("\\") else ""
        if raw.lstrip().startswith("\\") and "Problem name:" in raw:
            name = raw.split("Problem name:", 1)[1].strip() or name
        stripped = line.strip()
        if not stripped:
            continue
        key = _SECTION.get(stripped.lower())
        if key is not None:
            current = []
            sections.append((key, current))
            continue
        if current is None:
            raise LPParseError(f"content before first section: {stripped!r}")
        current.append(stripped)
    kinds = [k for k, _ in sections]
    if "end" not in kinds:
        raise LPParseError("missing End marker")
    sense = next((k for k in kinds if k in ("min", "max")), None)
    if sense is None:
        raise LPParseError("missing objective section")

    order: list[str] = []
    seen: set[str] = set()

    def note(v: str) -> None:
        if v not in seen:
            seen.add(v)
            order.append(v)

    objective: list[tuple[str, float]] = []
    rows: list[Constraint] = []
    lb: dict[str, float] = {}
    ub: dict[str, float] = {}
    binaries: set[str] = set()
    for key, lines in sections:
        toks = _tokens(" ".join(lines))
        if key in ("min", "max"):
            k = 1 if toks and toks[0].endswith(":") else 0
            objective, k = _linear(toks, k, set())
            for v, _ in objective:
                note(v)
        elif key == "st":
            k = 0
            anon = 0
            while k < len(toks):
                rname = None
                if toks[k].endswith(":"):
                    rname = toks[k][:-1]
                    k += 1
                terms, k = _linear(toks, k, {"<=", ">=", "=<", "=>", "<", ">", "="})
                if k >= len(toks):
                    raise LPParseError(f"constraint {rname} lacks a sense")
                op = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(toks[k], toks[k])
                k += 1
                rhs_sign = 1.0
                while toks[k] in "+-":
                    rhs_sign = -rhs_sign if toks[k] == "-" else rhs_sign
                    k += 1
                rhs = rhs_sign * _num(toks[k])
                k += 1
                if rname is None:
                    anon += 1
                    rname = f"R{anon}"
                merged: dict[str, float] = {}
                for v, c in terms:
                    note(v)
                    merged[v] = merged.get(v, 0.0) + c
                rows.append(Constraint(rname, tuple((v, c) for v, c in merged.items() if c != 0), op, rhs))
        elif key == "bounds":
            for line in lines:
                _parse_bound(line, lb, ub, note)
        elif key in ("bin", "gen"):
            for line in lines:
                for v in line.split():
                    note(v)
                    if key == "bin":
                        binaries.add(v)
                    else:
                        raise LPParseError("general integer variables are not supported")
    variables = []
    for v in order:
        if v in binaries:
            variables.append(Variable(v, "binary", 0.0, 1.0))
        else:
            variables.append(Variable(v, "continuous", lb.get(v, 0.0), ub.get(v, math.inf)))
    obj = tuple((v, c) for v, c in objective if c != 0)
    return MipModel(name, tuple(variables), tuple(rows), sense, obj)


def _parse_bound(line: str, lb: dict, ub: dict, note) -> None:
    toks = line.replace("<=", " <= ").replace(">=", " >= ").split()
    if len(toks) == 2 and toks[1].lower() == "free":
        note(toks[0])
        lb[toks[0]], ub[toks[0]] = -math.inf, math.inf
        return
    if len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
        v = toks[2]
        note(v)
        lb[v], ub[v] = _num(toks[0]), _num(toks[4])
        return
    if len(toks) == 3:
        a, op, b = toks
        if _NUMBER.match(a):
            a, b = b, a
            op = {"<=": ">=", ">=": "<=", "=": "="}[op]
        note(a)
        val = _num(b)
        if op == "<=":
            ub[a] = val
        elif op == ">=":
            lb[a] = val
        elif op == "=":
            lb[a] = ub[a] = val
        else:
            raise LPParseError(f"bad bound {line!r}")
        return
    raise LPParseError(f"bad bound {line!r}")


def read_lp_file(path: str | Path) -> MipModel:
    return read_lp(Path(path).read_text())
