"""Problem instance: vegetation classes, patches, treatment units and adjacency.

A :class:`Landscape` is immutable once built.  Instances are read from a JSON
document (see ``docs/FORMAT.md``) or from a CSV triplet directory containing
``veg.csv``, ``patches.csv`` and ``edges.csv``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

REL_TOL = 1e-9

DEFAULT_T = 5
DEFAULT_RHO = 0.15
DEFAULT_H = 0.5

WEIGHT_SCHEMES = ("unit", "combined_area", "shared_boundary_fraction")

Point = tuple[float, float]
Ring = tuple[Point, ...]
Edge = tuple[str, str]


class LandscapeError(ValueError):
    """Raised when an instance violates a structural invariant."""


def natural_key(ident: str) -> tuple:
    """Sort key that orders ``"2"`` before ``"10"`` and ``"u2"`` before ``"u10"``."""
    parts = re.split(r"(\d+)", str(ident))
    key = []
    for part in parts:
        if not part:
            continue
        if part.isdigit():
            key.append((0, int(part), part))
        else:
            key.append((1, 0, part))
    return tuple(key)


def normalize_edge(i: str, j: str) -> Edge:
    return (i, j) if natural_key(i) <= natural_key(j) else (j, i)


@dataclass(frozen=True)
class VegClass:
    code: str
    name: str
    min_tfi: int
    max_tfi: int
    risk_threshold: int

    def validate(self) -> None:
        if self.min_tfi < 1:
            raise LandscapeError(f"veg {self.code}: min_tfi must be >= 1")
        if self.risk_threshold < 1:
            raise LandscapeError(f"veg {self.code}: risk_threshold must be >= 1")
        if self.min_tfi > self.max_tfi:
            raise LandscapeError(f"veg {self.code}: min_tfi > max_tfi")
        if not self.min_tfi <= self.risk_threshold <= self.max_tfi:
            raise LandscapeError(
                f"veg {self.code}: risk_threshold must lie between min_tfi and max_tfi"
            )


@dataclass(frozen=True)
class Patch:
    id: str
    unit_id: str
    veg: str
    area: float
    initial_age: int


@dataclass(frozen=True)
class TreatmentUnit:
    id: str
    patches: tuple[str, ...]
    treatable: bool
    area_c: float


@dataclass(frozen=True)
class Landscape:
    veg_classes: Mapping[str, VegClass]
    units: Mapping[str, TreatmentUnit]
    patches: Mapping[str, Patch]
    edges: Mapping[Edge, float]
    horizon_T: int = DEFAULT_T
    rho: float = DEFAULT_RHO
    H: float = DEFAULT_H
    geometry: Mapping[str, Ring] | None = None
    name: str = ""

    @cached_property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.units, key=natural_key))

    @cached_property
    def treatable_ids(self) -> tuple[str, ...]:
        return tuple(u for u in self.unit_ids if self.units[u].treatable)

    @cached_property
    def patch_ids(self) -> tuple[str, ...]:
        return tuple(p for u in self.unit_ids for p in self.units[u].patches)

    @cached_property
    def edge_list(self) -> tuple[Edge, ...]:
        return tuple(sorted(self.edges, key=lambda e: (natural_key(e[0]), natural_key(e[1]))))

    @property
    def R(self) -> float:
        """Total area of treatable units."""
        return math.fsum(self.units[u].area_c for u in self.treatable_ids)

    @property
    def budget(self) -> float:
        return self.rho * self.R

    def veg_of(self, patch_id: str) -> VegClass:
        return self.veg_classes[self.patches[patch_id].veg]

    def patch_area_total(self, unit_id: str) -> float:
        return math.fsum(self.patches[p].area for p in self.units[unit_id].patches)

    def neighbours(self, unit_id: str) -> list[str]:
        out = [j for (i, j) in self.edge_list if i == unit_id]
        out += [i for (i, j) in self.edge_list if j == unit_id]
        return sorted(out, key=natural_key)

    def with_params(self, **kwargs) -> "Landscape":
        """Copy with any of ``horizon_T``, ``rho``, ``H``, ``edges`` replaced."""
        out = replace(self, **kwargs)
        out.validate()
        return out

    def with_ages(self, ages: Mapping[str, int]) -> "Landscape":
        patches = {
            pid: replace(p, initial_age=int(ages.get(pid, p.initial_age)))
            for pid, p in self.patches.items()
        }
        return replace(self, patches=patches)

    def validate(self) -> None:
        for v in self.veg_classes.values():
            v.validate()
        if self.horizon_T < 1:
            raise LandscapeError("horizon T must be >= 1")
        if not 0.0 < self.rho <= 1.0:
            raise LandscapeError("rho must lie in (0, 1]")
        if not 0.0 <= self.H < 1.0:
            raise LandscapeError("H must lie in [0, 1)")
        if not self.units:
            raise LandscapeError("landscape has no treatment units")
        for pid, p in self.patches.items():
            if p.unit_id not in self.units:
                raise LandscapeError(f"patch {pid}: unknown unit {p.unit_id}")
            if p.veg not in self.veg_classes:
                raise LandscapeError(f"patch {pid}: unknown veg class {p.veg}")
            if not p.area > 0:
                raise LandscapeError(f"patch {pid}: area must be > 0")
            if p.initial_age < 0:
                raise LandscapeError(f"patch {pid}: negative initial age")
        seen: set[str] = set()
        for uid, u in self.units.items():
            if not u.patches:
                raise LandscapeError(f"unit {uid}: no patches")
            for pid in u.patches:
                if pid not in self.patches:
                    raise LandscapeError(f"unit {uid}: unknown patch {pid}")
                if self.patches[pid].unit_id != uid:
                    raise LandscapeError(f"patch {pid} listed under unit {uid} but belongs elsewhere")
                if pid in seen:
                    raise LandscapeError(f"patch {pid} listed twice")
                seen.add(pid)
            if not u.area_c > 0:
                raise LandscapeError(f"unit {uid}: area must be > 0")
        if seen != set(self.patches):
            raise LandscapeError("patches not attached to any unit: " + ", ".join(sorted(set(self.patches) - seen)))
        for (i, j), w in self.edges.items():
            if i not in self.units or j not in self.units:
                raise LandscapeError(f"edge ({i}, {j}) references an undeclared unit")
            if i == j:
                raise LandscapeError(f"self-loop on unit {i}")
            if normalize_edge(i, j) != (i, j):
                raise LandscapeError(f"edge ({i}, {j}) not normalized")
            if not w >= 0:
                raise LandscapeError(f"edge ({i}, {j}): negative weight")
        if self.geometry is not None:
            for uid, ring in self.geometry.items():
                if uid not in self.units:
                    raise LandscapeError(f"geometry for undeclared unit {uid}")
                if len(_open_ring(ring)) < 3:
                    raise LandscapeError(f"unit {uid}: degenerate ring")


# --------------------------------------------------------------------------
# geometry

def _open_ring(ring: Sequence[Sequence[float]]) -> list[Point]:
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return pts


def _segments(ring: Sequence[Sequence[float]]) -> list[tuple[Point, Point]]:
    pts = _open_ring(ring)
    return [(pts[k], pts[(k + 1) % len(pts)]) for k in range(len(pts))]


def _close(a: Point, b: Point, tol: float) -> bool:
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol


def perimeter(ring: Sequence[Sequence[float]]) -> float:
    return math.fsum(math.dist(a, b) for a, b in _segments(ring))


def _bbox(ring: Sequence[Sequence[float]]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in ring]
    ys = [p[1] for p in ring]
    return min(xs), min(ys), max(xs), max(ys)


def shared_boundaries(
    polygons: Mapping[str, Sequence[Sequence[float]]], tolerance: float = 1e-9
) -> dict[Edge, float]:
    """Length of common boundary for every pair of units that share a segment.

    Two rings share a segment when two consecutive vertices of one coincide
    (within ``tolerance``) with two consecutive vertices of the other, in
    either orientation.  Point contact does not count.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    segs: dict[str, list[tuple[Point, Point]]] = {}
    boxes = {}
    for uid, ring in polygons.items():
        if len(_open_ring(ring)) < 3:
            raise LandscapeError(f"unit {uid}: degenerate ring (< 3 vertices)")
        segs[uid] = [s for s in _segments(ring) if not _close(s[0], s[1], tolerance)]
        boxes[uid] = _bbox(ring)
    out: dict[Edge, float] = {}
    ids = sorted(polygons, key=natural_key)
    for a, b in combinations(ids, 2):
        ba, bb = boxes[a], boxes[b]
        if ba[0] > bb[2] + tolerance or bb[0] > ba[2] + tolerance:
            continue
        if ba[1] > bb[3] + tolerance or bb[1] > ba[3] + tolerance:
            continue
        length = 0.0
        for p, q in segs[a]:
            for r, s in segs[b]:
                if (_close(p, r, tolerance) and _close(q, s, tolerance)) or (
                    _close(p, s, tolerance) and _close(q, r, tolerance)
                ):
                    length += math.dist(p, q)
                    break
        if length > 0:
            out[normalize_edge(a, b)] = length
    return out


def derive_adjacency(
    polygons: Mapping[str, Sequence[Sequence[float]]], tolerance: float = 1e-9
) -> set[Edge]:
    return set(shared_boundaries(polygons, tolerance))


def default_edge_weights(
    landscape: Landscape, scheme: str = "unit", edges: Iterable[Edge] | None = None
) -> dict[Edge, float]:
    """Connectivity weights for the landscape's edges under a named scheme.

    ``combined_area`` adds the two unit areas; ``shared_boundary_fraction``
    divides the common boundary length by the sum of both perimeters and
    needs geometry.
    """
    keys = list(landscape.edges if edges is None else edges)
    if scheme == "unit":
        return {e: 1.0 for e in keys}
    if scheme == "combined_area":
        return {(i, j): landscape.units[i].area_c + landscape.units[j].area_c for i, j in keys}
    if scheme == "shared_boundary_fraction":
        if landscape.geometry is None:
            raise LandscapeError("shared_boundary_fraction weights need unit geometry")
        missing = {u for e in keys for u in e if u not in landscape.geometry}
        if missing:
            raise LandscapeError("no geometry for units: " + ", ".join(sorted(missing, key=natural_key)))
        shared = shared_boundaries({u: landscape.geometry[u] for e in keys for u in e})
        return {
            (i, j): shared.get((i, j), 0.0)
            / (perimeter(landscape.geometry[i]) + perimeter(landscape.geometry[j]))
            for i, j in keys
        }
    raise ValueError(f"unknown weight scheme {scheme!r}; expected one of {WEIGHT_SCHEMES}")


def strip_layout(
    rows: Sequence[Sequence[tuple[str, int]]], row_height: float = 1.0
) -> dict[str, Ring]:
    """Rectangular polygon coverage built from rows of (unit id, width) cells.

    Every row must have the same total width.  Each ring carries the
    breakpoints of the neighbouring rows along its top and bottom edges, so
    neighbours across rows share exact segments.
    """
    totals = {sum(w for _, w in row) for row in rows}
    if len(totals) != 1:
        raise ValueError("rows must have equal total width")
    cuts = []
    for row in rows:
        xs, x = [0], 0
        for _, w in row:
            x += w
            xs.append(x)
        cuts.append(xs)
    out: dict[str, Ring] = {}
    for r, row in enumerate(rows):
        y0, y1 = r * row_height, (r + 1) * row_height
        below = set(cuts[r - 1]) if r > 0 else set()
        above = set(cuts[r + 1]) if r + 1 < len(rows) else set()
        x = 0
        for uid, w in row:
            x0, x1 = x, x + w
            x = x1
            bottom = [x0] + sorted(b for b in below if x0 < b < x1) + [x1]
            top = [x1] + sorted((a for a in above if x0 < a < x1), reverse=True) + [x0]
            ring = [(float(bx), y0) for bx in bottom] + [(float(tx), y1) for tx in top]
            out[uid] = tuple(ring)
    return out


# --------------------------------------------------------------------------
# construction and IO

def build_landscape(
    veg_classes: Iterable[VegClass],
    unit_rows: Iterable[dict],
    edges: Iterable[tuple] | None = None,
    *,
    T: int = DEFAULT_T,
    rho: float = DEFAULT_RHO,
    H: float = DEFAULT_H,
    geometry: Mapping[str, Sequence[Sequence[float]]] | None = None,
    weights: str = "unit",
    name: str = "",
) -> Landscape:
    """Assemble and validate a landscape.

    ``unit_rows`` holds dicts with keys ``id``, ``patches`` (dicts with ``id``,
    ``veg``, ``area``, ``age``), optional ``treatable`` (default true) and
    optional ``area`` overriding the patch-area sum.  ``edges`` holds
    ``(i, j)`` or ``(i, j, w)`` tuples; when omitted, adjacency is derived
    from ``geometry``.  Missing weights come from the ``weights`` scheme.
    """
    vegs: dict[str, VegClass] = {}
    for v in veg_classes:
        if v.code in vegs:
            raise LandscapeError(f"duplicate veg class {v.code}")
        vegs[v.code] = v
    units: dict[str, TreatmentUnit] = {}
    patches: dict[str, Patch] = {}
    for row in unit_rows:
        uid = str(row["id"])
        if uid in units:
            raise LandscapeError(f"duplicate unit {uid}")
        pids = []
        for k, pr in enumerate(row.get("patches", [])):
            pid = str(pr.get("id", f"{uid}.{k + 1}"))
            if pid in patches:
                raise LandscapeError(f"duplicate patch {pid}")
            age = pr["age"]
            if int(age) != age:
                raise LandscapeError(f"patch {pid}: age must be a whole number of years")
            patches[pid] = Patch(pid, uid, str(pr["veg"]), float(pr["area"]), int(age))
            pids.append(pid)
        if not pids:
            raise LandscapeError(f"unit {uid}: no patches")
        area = row.get("area")
        if area is None:
            area = math.fsum(patches[p].area for p in pids)
        units[uid] = TreatmentUnit(uid, tuple(pids), bool(row.get("treatable", True)), float(area))

    geom = None
    if geometry is not None:
        geom = {str(u): tuple((float(x), float(y)) for x, y in _open_ring(r)) for u, r in geometry.items()}

    explicit: dict[Edge, float | None] = {}
    if edges is not None:
        for e in edges:
            i, j = str(e[0]), str(e[1])
            if i == j:
                raise LandscapeError(f"self-loop on unit {i}")
            key = normalize_edge(i, j)
            if key in explicit:
                raise LandscapeError(f"duplicate edge ({key[0]}, {key[1]})")
            explicit[key] = float(e[2]) if len(e) > 2 and e[2] is not None else None
    elif geom is not None:
        explicit = {e: None for e in derive_adjacency(geom)}

    draft = Landscape(vegs, units, patches, {e: 0.0 for e in explicit}, int(T), float(rho), float(H), geom, name)
    draft.validate()
    if any(w is None for w in explicit.values()):
        defaults = default_edge_weights(draft, weights, [e for e, w in explicit.items() if w is None])
    else:
        defaults = {}
    final_edges = {e: (w if w is not None else defaults[e]) for e, w in explicit.items()}
    out = replace(draft, edges=final_edges)
    out.validate()
    return out


def landscape_from_dict(doc: Mapping, **overrides) -> Landscape:
    params = dict(doc.get("params", {}))
    for k, v in overrides.items():
        if v is not None:
            params[k] = v
    vegs = [
        VegClass(
            str(v["code"]), str(v.get("name", v["code"])), int(v["min_tfi"]), int(v["max_tfi"]),
            int(v["risk_threshold"]),
        )
        for v in doc.get("veg_classes", [])
    ]
    edges = None
    if "edges" in doc:
        edges = [(e["i"], e["j"], e.get("w")) for e in doc["edges"]]
    return build_landscape(
        vegs,
        doc.get("units", []),
        edges,
        T=params.get("T", DEFAULT_T),
        rho=params.get("rho", DEFAULT_RHO),
        H=params.get("H", DEFAULT_H),
        geometry=doc.get("geometry"),
        weights=params.get("weights", "unit"),
        name=doc.get("name", ""),
    )


def landscape_to_dict(landscape: Landscape) -> dict:
    units = []
    for uid in landscape.unit_ids:
        u = landscape.units[uid]
        row: dict = {"id": uid, "treatable": u.treatable}
        if not math.isclose(u.area_c, landscape.patch_area_total(uid), rel_tol=REL_TOL):
            row["area"] = u.area_c
        row["patches"] = [
            {"id": p.id, "veg": p.veg, "area": p.area, "age": p.initial_age}
            for p in (landscape.patches[pid] for pid in u.patches)
        ]
        units.append(row)
    doc: dict = {
        "name": landscape.name,
        "params": {"T": landscape.horizon_T, "rho": landscape.rho, "H": landscape.H},
        "veg_classes": [
            {"code": v.code, "name": v.name, "min_tfi": v.min_tfi, "max_tfi": v.max_tfi,
             "risk_threshold": v.risk_threshold}
            for v in sorted(landscape.veg_classes.values(), key=lambda v: natural_key(v.code))
        ],
        "units": units,
        "edges": [{"i": i, "j": j, "w": landscape.edges[(i, j)]} for i, j in landscape.edge_list],
    }
    if landscape.geometry is not None:
        doc["geometry"] = {
            u: [list(pt) for pt in landscape.geometry[u]]
            for u in sorted(landscape.geometry, key=natural_key)
        }
    return doc


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def _truthy(text: str | None) -> bool:
    if text is None or text == "":
        return True
    return text.lower() in ("1", "true", "yes", "y", "t")


def load_csv_triplet(directory: str | Path, **params) -> Landscape:
    """Read ``veg.csv``, ``patches.csv`` and ``edges.csv`` from ``directory``.

    patches.csv columns: ``unit_id, patch_id (optional), veg, area, age,
    treatable (optional)``.  edges.csv columns: ``i, j, w (optional)``.
    """
    d = Path(directory)
    vegs = [
        VegClass(r["code"], r.get("name") or r["code"], int(r["min_tfi"]), int(r["max_tfi"]),
                 int(r["risk_threshold"]))
        for r in _read_csv(d / "veg.csv")
    ]
    units: dict[str, dict] = {}
    for r in _read_csv(d / "patches.csv"):
        uid = r["unit_id"]
        row = units.setdefault(uid, {"id": uid, "patches": [], "treatable": _truthy(r.get("treatable"))})
        patch = {"veg": r["veg"], "area": float(r["area"]), "age": float(r["age"])}
        pid = r.get("patch_id")
        patch["id"] = pid if pid else f"{uid}.{len(row['patches']) + 1}"
        row["patches"].append(patch)
    edges = None
    if (d / "edges.csv").exists():
        edges = [(r["i"], r["j"], float(r["w"]) if r.get("w") else None) for r in _read_csv(d / "edges.csv")]
    return build_landscape(
        vegs, units.values(), edges,
        T=params.get("T") or DEFAULT_T,
        rho=params.get("rho") or DEFAULT_RHO,
        H=params["H"] if params.get("H") is not None else DEFAULT_H,
        weights=params.get("weights") or "unit",
        name=d.name,
    )


def load_landscape(path: str | Path, **overrides) -> Landscape:
    """Load an instance from a JSON file or a CSV-triplet directory.

    Keyword overrides (``T``, ``rho``, ``H``, ``weights``) replace values
    from the file when not ``None``.
    """
    p = Path(path)
    if p.is_dir():
        return load_csv_triplet(p, **overrides)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise LandscapeError(f"{p}: malformed instance file ({exc})") from exc
    if not isinstance(doc, dict):
        raise LandscapeError(f"{p}: instance document must be a JSON object")
    try:
        return landscape_from_dict(doc, **overrides)
    except (KeyError, TypeError) as exc:
        raise LandscapeError(f"{p}: missing or malformed field ({exc})") from exc


def save_landscape(landscape: Landscape, path: str | Path) -> None:
    Path(path).write_text(json.dumps(landscape_to_dict(landscape), indent=1) + "\n")


def demo_path() -> Path:
    """Path of the bundled 29-unit demonstration instance."""
    return Path(__file__).with_name("data") / "demo29.json"


def load_demo(**overrides) -> Landscape:
    return load_landscape(demo_path(), **overrides)
