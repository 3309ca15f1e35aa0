"""Linear B-spline basis on a geometric network.

Every edge carries an equidistant knot sequence whose spacing is as close
as possible to a global knot distance.  Interior knots of an edge carry
ordinary hat functions ("edge splines"); every vertex carries one hat
spanning the first knot interval of each incident edge ("vertex spline").
The basis sums to one everywhere on the network.

Global indexing is deterministic: edge splines first, grouped by edge and
ordered along it, then one vertex spline per vertex in vertex order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .network import Network, NetworkPoint, check_points, point_arrays

__all__ = [
    "KnotLayout",
    "NetworkBasis",
    "build_basis",
    "design_matrix",
    "evaluate_basis",
    "half_up_count",
    "knot_spacing",
    "write_basis_dump",
]


def half_up_count(length: float, width: float) -> int:
    """Round ``length / width`` to an integer, halves going up."""
    ratio = length / width
    lower = np.floor(ratio)
    return int(lower if ratio - lower < 0.5 else lower + 1)


def knot_spacing(d_m: float, delta: float) -> tuple[float, int]:
    """Per-edge knot distance and number of knot intervals.

    The interval count is ``d_m / delta`` rounded half-up and never less
    than 2, so that each edge carries at least one edge spline.

    Examples
    --------
    >>> knot_spacing(1.0, 0.26)
    (0.25, 4)
    >>> knot_spacing(0.05, 0.05)
    (0.025, 2)
    """
    if not (d_m > 0 and delta > 0):
        raise ValueError("edge length and knot distance must be positive")
    count = max(half_up_count(d_m, delta), 2)
    return d_m / count, count


@dataclass(frozen=True, eq=False)
class KnotLayout:
    delta_global: float
    delta_per_edge: np.ndarray
    intervals_per_edge: np.ndarray
    edge_lengths: np.ndarray

    @property
    def knots_per_edge(self) -> list[np.ndarray]:
        """Knot offsets ``0 = tau_1 < ... < tau_I = d_m`` for every edge."""
        return [
            np.linspace(0.0, d, c + 1)
            for d, c in zip(self.edge_lengths, self.intervals_per_edge)
        ]


@dataclass(frozen=True, eq=False)
class NetworkBasis:
    """Linear B-spline basis on ``network``."""

    network: Network
    layout: KnotLayout
    edge_start: np.ndarray

    @property
    def n_edge_splines(self) -> int:
        return int(np.sum(self.layout.intervals_per_edge - 1))

    @property
    def dimension(self) -> int:
        return self.n_edge_splines + self.network.n_vertices

    def vertex_spline(self, v: int) -> int:
        return self.n_edge_splines + v

    def edge_spline(self, m: int, k: int) -> int:
        """Global index of the ``k``-th (1-based) spline on edge ``m``."""
        if not 1 <= k <= self.layout.intervals_per_edge[m] - 1:
            raise IndexError(f"edge {m} has no spline {k}")
        return int(self.edge_start[m] + k - 1)

    def knot_index(self, m: int) -> np.ndarray:
        """Global spline index peaking at each knot of edge ``m``."""
        e = self.network.edges[m]
        c = int(self.layout.intervals_per_edge[m])
        idx = np.empty(c + 1, dtype=np.intp)
        idx[0] = self.vertex_spline(e.start)
        idx[-1] = self.vertex_spline(e.end)
        idx[1:-1] = self.edge_start[m] + np.arange(c - 1)
        return idx

    @cached_property
    def _knot_tables(self):
        counts = self.layout.intervals_per_edge
        first = np.concatenate([[0], np.cumsum(counts + 1)[:-1]])
        table = np.concatenate([self.knot_index(m) for m in range(self.network.n_edges)])
        return first, table

    @property
    def vertex_supports(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """``(edge, side)`` half-intervals supporting each vertex spline."""
        return self.network.incidence

    def spline_table(self) -> list[dict]:
        """One record per spline: kind, owner, position and peak location."""
        rows = []
        net = self.network
        for m, c in enumerate(self.layout.intervals_per_edge):
            for k in range(1, int(c)):
                rows.append(dict(
                    spline_id=int(self.edge_start[m] + k - 1), kind="edge",
                    edge_or_vertex_id=m, k=k, peak_edge=m,
                    peak_offset=float(k * self.layout.delta_per_edge[m]),
                ))
        for v, inc in enumerate(net.incidence):
            m, side = min(inc)
            rows.append(dict(
                spline_id=self.vertex_spline(v), kind="vertex", edge_or_vertex_id=v,
                k=0, peak_edge=m, peak_offset=0.0 if side == 0 else float(net.lengths[m]),
            ))
        return rows

    def peak_offsets(self) -> np.ndarray:
        """Arc position of each edge spline's peak along its own edge."""
        out = np.empty(self.n_edge_splines)
        for m, c in enumerate(self.layout.intervals_per_edge):
            out[self.edge_start[m]:self.edge_start[m] + c - 1] = (
                np.arange(1, c) * self.layout.delta_per_edge[m]
            )
        return out


def build_basis(net: Network, delta: float) -> NetworkBasis:
    """Knot layout and basis bookkeeping for knot distance ``delta``."""
    spacing = [knot_spacing(d, delta) for d in net.lengths]
    dm = np.array([s[0] for s in spacing])
    counts = np.array([s[1] for s in spacing], dtype=np.intp)
    start = np.concatenate([[0], np.cumsum(counts - 1)[:-1]]).astype(np.intp)
    for arr in (dm, counts, start):
        arr.setflags(write=False)
    return NetworkBasis(net, KnotLayout(float(delta), dm, counts, net.lengths), start)


def basis_terms(basis: NetworkBasis, edges, offsets) -> tuple[np.ndarray, np.ndarray]:
    """The two potentially nonzero basis terms at each point.

    Returns
    -------
    cols : ndarray, shape (n, 2)
        Global spline indices of the knots bracketing each point.
    vals : ndarray, shape (n, 2)
        Their values; each row sums to one.

    Notes
    -----
    Knot intervals are half-open except the last one of each edge, which
    is closed so the edge's far endpoint is covered as well.
    """
    edges = np.asarray(edges, dtype=np.intp)
    offsets = np.asarray(offsets, dtype=float)
    dm = basis.layout.delta_per_edge[edges]
    counts = basis.layout.intervals_per_edge[edges]
    s = offsets / dm
    near = np.rint(s)
    s = np.where(np.abs(s - near) <= 1e-12 * np.maximum(1.0, s), near, s)
    left = np.minimum(np.floor(s).astype(np.intp), counts - 1)
    frac = s - left
    first, table = basis._knot_tables
    base = first[edges] + left
    cols = np.stack([table[base], table[base + 1]], axis=1)
    vals = np.stack([1.0 - frac, frac], axis=1)
    return cols, vals


def design_matrix(basis: NetworkBasis, edges, offsets) -> sparse.csr_matrix:
    """Rows ``B(z)`` for every point, as a sparse ``(n, J)`` matrix."""
    edges = np.asarray(edges, dtype=np.intp)
    offsets = np.asarray(offsets, dtype=float)
    check_points(basis.network, edges, offsets)
    cols, vals = basis_terms(basis, edges, offsets)
    n = len(edges)
    rows = np.repeat(np.arange(n), 2)
    mat = sparse.csr_matrix(
        (vals.ravel(), (rows, cols.ravel())), shape=(n, basis.dimension)
    )
    mat.eliminate_zeros()
    return mat


def evaluate_basis(z: NetworkPoint, basis: NetworkBasis) -> sparse.csr_matrix:
    """Sparse ``1 x J`` row of basis values at ``z``."""
    return design_matrix(basis, *point_arrays([z]))


def write_basis_dump(basis: NetworkBasis, path) -> None:
    """Write the per-spline table as CSV."""
    fields = ["spline_id", "kind", "edge_or_vertex_id", "k", "peak_edge", "peak_offset"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in sorted(basis.spline_table(), key=lambda r: r["spline_id"]):
            row = dict(row, peak_offset=repr(row["peak_offset"]))
            w.writerow(row)
