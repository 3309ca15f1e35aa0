"""Reading and writing networks, point patterns, fits and plot-ready dumps.

JSON documents carry a top-level ``"version": 1``.  CSV files are UTF-8
with a header row; lines starting with ``#`` are comments, and an optional
``# format: <name> <version>`` comment is checked when present.  Reals are
written with 17 significant digits so every file round-trips exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy import sparse

from .basis import build_basis
from .exceptions import FormatError, NetworkError, SnapError
from .model import FitConfig, FitResult, IntensityRatio, bin_layout, sample_curve
from .network import Network, NetworkPoint, build_network, embed_many, point_arrays, snap_many
from .sim import StudyReport

__all__ = [
    "fit_from_dict",
    "fit_to_dict",
    "load_fit",
    "network_from_dict",
    "network_to_dict",
    "read_checkpoint",
    "read_network",
    "read_points",
    "read_study",
    "append_checkpoint",
    "save_fit",
    "write_intensity_at",
    "write_intensity_dump",
    "write_network",
    "write_points",
    "write_ratio_dump",
    "write_triplets",
]

VERSION = 1


def _num(x) -> str:
    """Shortest text that reads back to the same double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _check_version(doc: dict, what: str) -> None:
    if not isinstance(doc, dict):
        raise FormatError(f"{what}: top level must be a JSON object")
    if "version" not in doc:
        raise FormatError(f"{what}: missing field 'version'")
    if doc["version"] != VERSION:
        raise FormatError(f"{what}: unsupported version {doc['version']!r} (this reader knows {VERSION})")


def _dump_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path, what: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what} {path}: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------
# networks


def network_to_dict(net: Network) -> dict:
    return {
        "version": VERSION,
        "vertices": net.vertices.tolist(),
        "edges": [
            {"from": e.start, "to": e.end, "polyline": e.polyline.tolist()}
            for e in net.edges
        ],
    }


def network_from_dict(doc: dict, what: str = "network") -> Network:
    """Validate a network document and build the network.

    Raises
    ------
    FormatError
        Naming the offending field, e.g. ``edges[3].polyline``.
    """
    _check_version(doc, what)
    for key in ("vertices", "edges"):
        if key not in doc:
            raise FormatError(f"{what}: missing field '{key}'")
    verts = doc["vertices"]
    if not isinstance(verts, list) or not verts:
        raise FormatError(f"{what}: 'vertices' must be a non-empty list of coordinates")
    for i, v in enumerate(verts):
        if not (isinstance(v, list) and len(v) in (2, 3) and all(isinstance(c, (int, float)) for c in v)):
            raise FormatError(f"{what}: vertices[{i}] must be a list of 2 or 3 numbers")
    if not isinstance(doc["edges"], list):
        raise FormatError(f"{what}: 'edges' must be a list")
    edges = []
    for m, e in enumerate(doc["edges"]):
        if not isinstance(e, dict):
            raise FormatError(f"{what}: edges[{m}] must be an object")
        for key in ("from", "to", "polyline"):
            if key not in e:
                raise FormatError(f"{what}: edges[{m}] is missing field '{key}'")
        for key in ("from", "to"):
            if not isinstance(e[key], int) or isinstance(e[key], bool):
                raise FormatError(f"{what}: edges[{m}].{key} must be an integer")
        poly = e["polyline"]
        if not (isinstance(poly, list) and len(poly) >= 2
                and all(isinstance(p, list) and all(isinstance(c, (int, float)) for c in p) for p in poly)):
            raise FormatError(f"{what}: edges[{m}].polyline must be a list of >= 2 coordinate lists")
        edges.append((e["from"], e["to"], poly))
    try:
        return build_network(verts, edges)
    except NetworkError as exc:
        raise FormatError(f"{what}: {exc}") from exc


def read_network(path) -> Network:
    return network_from_dict(_load_json(path, "network"), f"network {path}")


def write_network(net: Network, path) -> None:
    _dump_json(network_to_dict(net), path)


# --------------------------------------------------------------------------
# point patterns


def _csv_rows(path, fmt: str):
    """Yield ``(line_number, fields)`` for data rows, header first."""
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if body.startswith("format:"):
                    parts = body[len("format:"):].split()
                    if len(parts) != 2 or parts[0] != fmt:
                        raise FormatError(f"{path}:{lineno}: expected a '{fmt}' file, found {body!r}")
                    if parts[1] != str(VERSION):
                        raise FormatError(f"{path}:{lineno}: unsupported {fmt} version {parts[1]}")
                continue
            yield lineno, next(csv.reader([stripped]))


def read_points(path, net: Network, snap_tolerance: float = 1e-6) -> list[NetworkPoint]:
    """Read a point pattern.

    The header is either ``edge_id,offset`` (canonical locations, checked
    against edge lengths) or ``x,y`` / ``x,y,z`` (plane coordinates,
    snapped to the nearest edge within ``snap_tolerance``).
    """
    rows = _csv_rows(path, "netspline-points")
    try:
        _, header = next(rows)
    except StopIteration:
        raise FormatError(f"{path}: empty file, expected a header row") from None
    header = [h.strip() for h in header]
    if header == ["edge_id", "offset"]:
        planar = False
    elif header in (["x", "y"], ["x", "y", "z"]):
        planar = True
    else:
        raise FormatError(f"{path}: header must be 'edge_id,offset' or 'x,y', got {','.join(header)!r}")
    width = len(header)
    data, lines = [], []
    for lineno, fields in rows:
        if len(fields) != width:
            raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
        try:
            if planar:
                data.append([float(f) for f in fields])
            else:
                data.append((int(fields[0]), float(fields[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: cannot parse {','.join(fields)!r}") from None
        lines.append(lineno)
    if not data:
        return []
    if planar:
        coords = np.array(data)
        if coords.shape[1] != net.dim:
            raise FormatError(f"{path}: {coords.shape[1]}-d points on a {net.dim}-d network")
        try:
            edges, offsets, _ = snap_many(coords, net, snap_tolerance)
        except SnapError as exc:
            raise FormatError(f"{path}:{lines[exc.index]}: {exc}") from exc
    else:
        edges = np.array([d[0] for d in data], dtype=np.intp)
        offsets = np.array([d[1] for d in data])
        for k, (m, t) in enumerate(zip(edges, offsets)):
            if not 0 <= m < net.n_edges:
                raise FormatError(f"{path}:{lines[k]}: edge {m} does not exist")
            if not 0.0 <= t <= net.lengths[m]:
                raise FormatError(f"{path}:{lines[k]}: offset {t!r} outside [0, {net.lengths[m]!r}] of edge {m}")
    return [NetworkPoint(int(m), float(t)) for m, t in zip(edges, offsets)]


def write_points(points, path) -> None:
    """Write canonical ``edge_id,offset`` rows (header kept when empty)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# format: netspline-points {VERSION}\n")
        fh.write("edge_id,offset\n")
        if isinstance(points, tuple) and len(points) == 2:
            pairs = zip(*points)
        else:
            pairs = ((p.edge, p.offset) for p in points)
        for m, t in pairs:
            fh.write(f"{int(m)},{_num(t)}\n")


# --------------------------------------------------------------------------
# fits


def fit_to_dict(fit: FitResult) -> dict:
    layout = fit.basis.layout
    return {
        "version": VERSION,
        "kind": "intensity-fit",
        "config": fit.config.to_dict(),
        "network": network_to_dict(fit.network),
        "gamma": fit.gamma.tolist(),
        "rho": fit.rho,
        "edf": fit.edf,
        "n": fit.n,
        "fitted_mass": fit.fitted_mass,
        "penalty_order": fit.penalty_order,
        "convergence": {
            "converged": fit.converged,
            "rho_capped": fit.rho_capped,
            "outer_iterations": fit.outer_iterations,
            "newton_iterations": fit.newton_iterations,
            "rho_path": list(fit.rho_path),
        },
        "basis": {
            "dimension": fit.basis.dimension,
            "intervals_per_edge": layout.intervals_per_edge.tolist(),
            "knot_distance_per_edge": layout.delta_per_edge.tolist(),
            "bins_per_edge": fit.bins.bins_per_edge.tolist(),
        },
    }


def fit_from_dict(doc: dict, what: str = "fit") -> FitResult:
    _check_version(doc, what)
    if doc.get("kind") != "intensity-fit":
        raise FormatError(f"{what}: field 'kind' must be 'intensity-fit'")
    try:
        net = network_from_dict(doc["network"], f"{what}.network")
        config = FitConfig(**doc["config"])
        basis = build_basis(net, config.delta)
        bins = bin_layout(net, config.h, basis)
        stored = doc["basis"]
        if (stored["intervals_per_edge"] != basis.layout.intervals_per_edge.tolist()
                or stored["bins_per_edge"] != bins.bins_per_edge.tolist()):
            raise FormatError(f"{what}: stored knot/bin layout does not match the rebuilt one")
        gamma = np.array(doc["gamma"], dtype=float)
        if len(gamma) != basis.dimension:
            raise FormatError(f"{what}: 'gamma' has {len(gamma)} entries, basis has {basis.dimension}")
        gamma.setflags(write=False)
        conv = doc["convergence"]
        return FitResult(
            gamma=gamma, rho=float(doc["rho"]), penalty_order=int(doc["penalty_order"]),
            n=int(doc["n"]), edf=float(doc["edf"]), fitted_mass=float(doc["fitted_mass"]),
            outer_iterations=int(conv["outer_iterations"]),
            newton_iterations=int(conv["newton_iterations"]),
            converged=bool(conv["converged"]), rho_capped=bool(conv["rho_capped"]),
            rho_path=tuple(float(r) for r in conv["rho_path"]), config=config,
            basis=basis, bins=bins,
        )
    except KeyError as exc:
        raise FormatError(f"{what}: missing field {exc}") from None
    except TypeError as exc:
        raise FormatError(f"{what}: {exc}") from None


def save_fit(fit: FitResult, path) -> None:
    _dump_json(fit_to_dict(fit), path)


def load_fit(path) -> FitResult:
    """Load a fit; the basis is rebuilt from the stored network and config."""
    return fit_from_dict(_load_json(path, "fit"), f"fit {path}")


# --------------------------------------------------------------------------
# dumps


def _write_samples(path, fmt: str, edges, offsets, coords, columns: dict) -> None:
    dims = ["x", "y", "z"][: coords.shape[1]]
    order = np.lexsort((offsets, edges))
    text_cols = [
        [str(int(v)) for v in c] if np.asarray(c).dtype == bool else [_num(v) for v in c]
        for c in columns.values()
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# format: {fmt} {VERSION}\n")
        fh.write(",".join(["edge_id", "offset", *dims, *columns]) + "\n")
        for k in order:
            vals = [str(int(edges[k])), _num(offsets[k]), *(_num(c) for c in coords[k])]
            vals += [c[k] for c in text_cols]
            fh.write(",".join(vals) + "\n")


def write_intensity_dump(fit: FitResult, path, step: float | None = None, *,
                         density: bool = True) -> int:
    """Fitted intensity (and density) along every edge.

    Samples every ``step`` including both edge endpoints, or at the bin
    midpoints when ``step`` is None.  Returns the number of rows.
    """
    edges, offsets, coords = sample_curve(fit, step)
    cols = {"intensity": fit.intensity((edges, offsets))}
    if density:
        cols["density"] = cols["intensity"] / fit.n
    _write_samples(path, "netspline-intensity", edges, offsets, coords, cols)
    return len(edges)


def write_intensity_at(fit: FitResult, points, path) -> int:
    """Fitted intensity and density at given points, sorted by location."""
    edges, offsets = point_arrays(points)
    lam = fit.intensity((edges, offsets))
    coords = embed_many(fit.network, edges, offsets).reshape(len(edges), fit.network.dim)
    _write_samples(path, "netspline-intensity", edges, offsets, coords,
                   {"intensity": lam, "density": lam / fit.n})
    return len(edges)


def write_ratio_dump(ratio: IntensityRatio, path, step: float | None = None) -> int:
    """Ratio of two fits; ``defined`` is 0 and ``ratio`` is ``nan`` below the floor."""
    edges, offsets, coords = sample_curve(ratio.denominator, step)
    pts = (edges, offsets)
    values = ratio(pts)
    defined = ratio.defined(pts)
    _write_samples(path, "netspline-ratio", edges, offsets, coords,
                   {"ratio": values, "defined": defined})
    return len(edges)


def write_triplets(matrix, path) -> None:
    """Sparse matrix as ``row,col,value`` lines (zero-based, row-major)."""
    m = sparse.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# shape: {m.shape[0]} {m.shape[1]}\n")
        fh.write("row,col,value\n")
        for k in order:
            v = m.data[k]
            text = str(int(v)) if float(v).is_integer() else _num(v)
            fh.write(f"{m.row[k]},{m.col[k]},{text}\n")


def read_triplets(path) -> sparse.csr_matrix:
    shape = None
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# shape:"):
                shape = tuple(int(s) for s in line.split(":")[1].split())
            elif line and not line.startswith("#") and line != "row,col,value":
                r, c, v = line.split(",")
                rows.append(int(r))
                cols.append(int(c))
                vals.append(float(v))
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape)


# --------------------------------------------------------------------------
# studies


def read_study(path) -> StudyReport:
    doc = _load_json(path, "study")
    _check_version(doc, f"study {path}")
    try:
        return StudyReport(doc["config"], doc["records"])
    except KeyError as exc:
        raise FormatError(f"study {path}: missing field {exc}") from None


def append_checkpoint(record: dict, path) -> None:
    """Append one replicate record as a JSON line.

    A partial last line left by an interrupted run is closed off first so
    the new record stays readable.
    """
    path = Path(path)
    lead = ""
    if path.exists() and path.stat().st_size:
        with open(path, "rb") as fh:
            fh.seek(-1, 2)
            if fh.read(1) != b"\n":
                lead = "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(lead + json.dumps(record, sort_keys=True) + "\n")


def read_checkpoint(path) -> list[dict]:
    """Records from a checkpoint file; a truncated last line is ignored."""
    out = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        return out
    for line in text.splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(rec, dict) and all(k in rec for k in ("n", "replicate", "ok")):
            out.append(rec)
    return out
