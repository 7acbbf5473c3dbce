"""Reading variable values written by external solvers."""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .lpio import name_map
from .model import MipModel, ModelError

DIALECTS = ("generic_csv", "lp_sol_xml")


class SolutionParseError(ModelError):
    pass


@dataclass(frozen=True)
class Solution:
    values: dict[str, float]
    warnings: tuple[str, ...]


def _parse_csv(text: str) -> list[tuple[str, str]]:
    out = []
    for row in csv.reader(io.StringIO(text)):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) < 2:
            raise SolutionParseError(f"expected 'name,value', got {row!r}")
        out.append((row[0].strip(), row[1].strip()))
    if out and out[0][0].lower() in ("name", "variable", "var"):
        try:
            float(out[0][1])
        except ValueError:
            out = out[1:]
    return out


def _parse_xml(text: str) -> list[tuple[str, str]]:
    if not text.strip():
        return []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SolutionParseError(f"malformed solution XML: {exc}") from exc
    out = []
    for el in root.iter("variable"):
        name, value = el.get("name"), el.get("value")
        if name is None or value is None:
            raise SolutionParseError("<variable> needs name and value attributes")
        out.append((name, value))
    return out


def read_solution(model: MipModel, sol_file: str | Path, dialect: str = "generic_csv") -> Solution:
    """Values keyed by model variable name.

    File names may be either the model's names or their sanitized LP/MPS
    form.  Variables absent from the file default to their lower bound
    clipped to 0, each with a warning.
    """
    text = Path(sol_file).read_text()
    if dialect == "generic_csv":
        pairs = _parse_csv(text)
    elif dialect == "lp_sol_xml":
        pairs = _parse_xml(text)
    else:
        raise ValueError(f"unknown solution dialect {dialect!r}; expected one of {DIALECTS}")
    back = {s: n for n, s in name_map(model).items() if n in model.index}
    values: dict[str, float] = {}
    for raw, val in pairs:
        name = raw if raw in model.index else back.get(raw)
        if name is None:
            raise SolutionParseError(f"value given for undeclared variable {raw!r}")
        try:
            values[name] = float(val)
        except ValueError as exc:
            raise SolutionParseError(f"bad value for {raw!r}: {val!r}") from exc
    warnings = []
    for v in model.variables:
        if v.name not in values:
            default = max(v.lb, 0.0) if v.lb != float("-inf") else 0.0
            values[v.name] = min(default, v.ub)
            warnings.append(f"{v.name} missing; defaulted to {values[v.name]:g}")
    return Solution(values, tuple(warnings))
