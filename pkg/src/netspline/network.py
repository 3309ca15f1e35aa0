"""Geometric networks made of polyline edges.

A network is stored as vertex coordinates plus a tuple of :class:`Edge`
records.  Locations on the network are addressed canonically by an edge
index and an arc-length offset measured from the edge's first endpoint
(:class:`NetworkPoint`).  Edges are undirected; the stored orientation only
fixes where offset zero lies.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .exceptions import NetworkError, SnapError

__all__ = [
    "Edge",
    "Network",
    "NetworkPoint",
    "arc_length",
    "build_network",
    "embed",
    "embed_many",
    "merge_degree_two",
    "network_distance",
    "point_arrays",
    "snap",
    "snap_many",
]


def arc_length(polyline) -> float:
    """Length of a piecewise-linear curve.

    Parameters
    ----------
    polyline : array_like, shape (k, q)
        Ordered points, ``k >= 2``.

    Returns
    -------
    float
        Sum of Euclidean distances between consecutive points.
    """
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise NetworkError("a polyline needs at least two points")
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass(frozen=True, eq=False)
class Edge:
    """One polyline edge between vertices ``start`` and ``end``."""

    start: int
    end: int
    polyline: np.ndarray
    length: float

    @property
    def is_loop(self) -> bool:
        return self.start == self.end

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Arc length at each polyline point, starting at 0."""
        pieces = np.linalg.norm(np.diff(self.polyline, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        cum[-1] = self.length
        return cum


@dataclass(frozen=True, order=True)
class NetworkPoint:
    """Canonical location: ``offset`` along edge ``edge``."""

    edge: int
    offset: float


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable geometric network.

    Use :func:`build_network` to construct one; it validates the input,
    drops isolated vertices and computes the derived fields.
    """

    vertices: np.ndarray
    edges: tuple[Edge, ...]
    total_length: float
    degrees: np.ndarray
    components: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_components(self) -> int:
        return int(self.components.max()) + 1 if len(self.components) else 0

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    @cached_property
    def starts(self) -> np.ndarray:
        return np.array([e.start for e in self.edges], dtype=np.intp)

    @cached_property
    def ends(self) -> np.ndarray:
        return np.array([e.end for e in self.edges], dtype=np.intp)

    @cached_property
    def incidence(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per vertex, the ``(edge, side)`` pairs touching it.

        ``side`` is 0 when the vertex is the edge's start and 1 when it is
        the end.  A loop shows up twice, once per side.
        """
        inc: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for m, e in enumerate(self.edges):
            inc[e.start].append((m, 0))
            inc[e.end].append((m, 1))
        return tuple(tuple(x) for x in inc)

    @cached_property
    def fingerprint(self) -> str:
        """Hex digest identifying the geometry and topology."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        for e in self.edges:
            h.update(np.array([e.start, e.end], dtype="<i8").tobytes())
            h.update(np.ascontiguousarray(e.polyline, dtype="<f8").tobytes())
        return h.hexdigest()

    @cached_property
    def _vertex_graph(self):
        # shortest parallel edge wins; loops never shorten a vertex path
        best: dict[tuple[int, int], float] = {}
        for e in self.edges:
            if e.is_loop:
                continue
            key = (min(e.start, e.end), max(e.start, e.end))
            best[key] = min(best.get(key, np.inf), e.length)
        if not best:
            return sparse.csr_matrix((self.n_vertices, self.n_vertices))
        ij = np.array(list(best.keys()))
        w = np.array(list(best.values()))
        g = sparse.coo_matrix((w, (ij[:, 0], ij[:, 1])), shape=(self.n_vertices,) * 2)
        return g.tocsr()

    @cached_property
    def _segments(self):
        starts, ends, edge_id, seg_off = [], [], [], []
        for m, e in enumerate(self.edges):
            starts.append(e.polyline[:-1])
            ends.append(e.polyline[1:])
            edge_id.append(np.full(len(e.polyline) - 1, m))
            seg_off.append(e.cumulative[:-1])
        return (
            np.concatenate(starts),
            np.concatenate(ends),
            np.concatenate(edge_id),
            np.concatenate(seg_off),
        )

    def vertex_distances(self, sources) -> np.ndarray:
        """Shortest-path distances from ``sources`` to every vertex."""
        return csgraph.dijkstra(self._vertex_graph, directed=False, indices=sources)

    def same_as(self, other: "Network") -> bool:
        return self is other or self.fingerprint == other.fingerprint


def _coerce_edge(spec) -> tuple[int, int, np.ndarray | None]:
    if isinstance(spec, Edge):
        return spec.start, spec.end, spec.polyline
    if isinstance(spec, dict):
        return int(spec["from"]), int(spec["to"]), spec.get("polyline")
    spec = tuple(spec)
    if len(spec) == 2:
        return int(spec[0]), int(spec[1]), None
    if len(spec) == 3:
        return int(spec[0]), int(spec[1]), spec[2]
    raise NetworkError(f"cannot interpret edge specification {spec!r}")


def build_network(vertices, edges: Iterable, *, tol: float = 1e-9) -> Network:
    """Validate input and construct a :class:`Network`.

    Parameters
    ----------
    vertices : array_like, shape (W, q)
        Vertex coordinates, ``q`` is 2 or 3.
    edges : iterable
        Each item is an :class:`Edge`, a ``(i, j)`` pair (straight segment),
        a ``(i, j, polyline)`` triple, or a mapping with keys ``from``,
        ``to`` and optionally ``polyline``.
    tol : float
        Relative tolerance for polyline endpoints to match their vertices.
        Matching endpoints are replaced by the exact vertex coordinates.

    Returns
    -------
    Network
        Vertices of degree zero are removed and the remaining ones
        renumbered in their original order.
    """
    verts = np.array(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] not in (2, 3):
        raise NetworkError("vertices must be an array of shape (W, 2) or (W, 3)")
    if not np.all(np.isfinite(verts)):
        raise NetworkError("vertex coordinates must be finite")
    n_v = len(verts)
    scale = max(1.0, float(np.abs(verts).max())) if n_v else 1.0

    raw = []
    for m, spec in enumerate(edges):
        i, j, poly = _coerce_edge(spec)
        if not (0 <= i < n_v and 0 <= j < n_v):
            raise NetworkError(f"edge {m} refers to a missing vertex ({i}, {j})")
        if poly is None:
            pts = np.vstack([verts[i], verts[j]])
        else:
            pts = np.array(poly, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != verts.shape[1] or len(pts) < 2:
                raise NetworkError(f"edge {m}: polyline must have >= 2 points of dimension {verts.shape[1]}")
            for end, v in ((0, i), (-1, j)):
                if np.max(np.abs(pts[end] - verts[v])) > tol * scale:
                    raise NetworkError(f"edge {m}: polyline does not end at vertex {v}")
                pts[end] = verts[v]
        keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
        pts = pts[keep]
        if len(pts) < 2:
            raise NetworkError(f"edge {m} has zero length")
        raw.append((i, j, pts))
    if not raw:
        raise NetworkError("a network needs at least one edge")

    deg = np.zeros(n_v, dtype=int)
    for i, j, _ in raw:
        deg[i] += 1
        deg[j] += 1
    used = deg > 0
    new_index = np.cumsum(used) - 1

    built = []
    for i, j, pts in raw:
        length = arc_length(pts)
        if not length > 0:
            raise NetworkError("edge has zero length")
        built.append(Edge(int(new_index[i]), int(new_index[j]), pts, length))
    verts = verts[used]
    deg = deg[used]

    rows = [e.start for e in built]
    cols = [e.end for e in built]
    adj = sparse.coo_matrix((np.ones(len(built)), (rows, cols)), shape=(len(verts),) * 2)
    _, labels = csgraph.connected_components(adj, directed=False)

    for arr in (verts, deg, labels):
        arr.setflags(write=False)
    for e in built:
        e.polyline.setflags(write=False)
    total = float(np.sum([e.length for e in built]))
    return Network(verts, tuple(built), total, deg, labels)


def point_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    """Split a point collection into edge-index and offset arrays.

    ``points`` may be a sequence of :class:`NetworkPoint` or a pair
    ``(edges, offsets)`` of array-likes.
    """
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], NetworkPoint):
        edges = np.asarray(points[0], dtype=np.intp).ravel()
        offsets = np.asarray(points[1], dtype=float).ravel()
        if edges.shape != offsets.shape:
            raise ValueError("edge and offset arrays differ in length")
        return edges, offsets
    pts = list(points)
    edges = np.fromiter((p.edge for p in pts), dtype=np.intp, count=len(pts))
    offsets = np.fromiter((p.offset for p in pts), dtype=float, count=len(pts))
    return edges, offsets


def check_points(net: Network, edges: np.ndarray, offsets: np.ndarray) -> None:
    if len(edges) == 0:
        return
    if edges.min() < 0 or edges.max() >= net.n_edges:
        raise NetworkError("point refers to a missing edge")
    d = net.lengths[edges]
    if np.any(offsets < 0) or np.any(offsets > d) or not np.all(np.isfinite(offsets)):
        bad = int(np.flatnonzero((offsets < 0) | (offsets > d) | ~np.isfinite(offsets))[0])
        raise NetworkError(f"offset {offsets[bad]!r} outside [0, {d[bad]!r}] on edge {edges[bad]}")


def embed_many(net: Network, edges, offsets) -> np.ndarray:
    """Coordinates of many network points, shape ``(n, q)``."""
    edges = np.asarray(edges, dtype=np.intp)
    offsets = np.asarray(offsets, dtype=float)
    check_points(net, edges, offsets)
    out = np.empty((len(edges), net.dim))
    for m in np.unique(edges):
        sel = edges == m
        e = net.edges[m]
        for c in range(net.dim):
            out[sel, c] = np.interp(offsets[sel], e.cumulative, e.polyline[:, c])
    return out


def embed(point: NetworkPoint, net: Network) -> tuple[float, ...]:
    """Coordinates of a single network point."""
    xy = embed_many(net, [point.edge], [point.offset])[0]
    return tuple(float(c) for c in xy)


def snap_many(coords, net: Network, tolerance: float, *, chunk: int = 256):
    """Project planar locations onto the nearest network location.

    Returns
    -------
    edges, offsets, distances : ndarray
        Canonical locations and the Euclidean snapping distances.

    Raises
    ------
    SnapError
        If any location lies farther than ``tolerance`` from the network.
        Ties in distance go to the lowest edge index, then the smallest
        offset.
    """
    pts = np.atleast_2d(np.asarray(coords, dtype=float))
    if pts.shape[1] != net.dim:
        raise NetworkError(f"coordinates must have dimension {net.dim}")
    a, b, seg_edge, seg_off = net._segments
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    seg_len = np.sqrt(seg_len2)

    n = len(pts)
    out_e = np.empty(n, dtype=np.intp)
    out_t = np.empty(n)
    out_d = np.empty(n)
    for lo in range(0, n, chunk):
        p = pts[lo:lo + chunk]
        ap = p[:, None, :] - a[None, :, :]
        u = np.clip(np.einsum("nsk,sk->ns", ap, ab) / seg_len2, 0.0, 1.0)
        proj = a[None] + u[..., None] * ab[None]
        dist = np.linalg.norm(p[:, None, :] - proj, axis=2)
        offs = np.minimum(seg_off[None, :] + u * seg_len[None, :], net.lengths[seg_edge][None, :])
        for r in range(len(p)):
            dmin = dist[r].min()
            cand = np.flatnonzero(dist[r] <= dmin + 1e-12 * max(1.0, dmin))
            best = cand[np.lexsort((offs[r, cand], seg_edge[cand]))[0]]
            out_e[lo + r] = seg_edge[best]
            out_t[lo + r] = offs[r, best]
            out_d[lo + r] = dist[r, best]
    far = out_d > tolerance
    if np.any(far):
        k = int(np.flatnonzero(far)[0])
        raise SnapError(
            f"location {pts[k].tolist()} is {out_d[k]:.6g} from the network (tolerance {tolerance})",
            float(out_d[k]), k,
        )
    return out_e, out_t, out_d


def snap(coords, net: Network, tolerance: float) -> NetworkPoint:
    """Nearest network location to a single coordinate tuple."""
    e, t, _ = snap_many([coords], net, tolerance)
    return NetworkPoint(int(e[0]), float(t[0]))


def network_distance(z1: NetworkPoint, z2: NetworkPoint, net: Network) -> float:
    """Shortest-path distance along the network; ``inf`` across components."""
    check_points(net, np.array([z1.edge, z2.edge]), np.array([z1.offset, z2.offset]))
    ea, eb = net.edges[z1.edge], net.edges[z2.edge]
    best = np.inf
    if z1.edge == z2.edge:
        best = abs(z1.offset - z2.offset)
    src = [ea.start, ea.end]
    to_src = [z1.offset, ea.length - z1.offset]
    from_dst = {eb.start: z2.offset, eb.end: eb.length - z2.offset}
    if eb.start == eb.end:
        from_dst[eb.start] = min(z2.offset, eb.length - z2.offset)
    dist = net.vertex_distances(src)
    for row, lead in zip(dist, to_src):
        for w, tail in from_dst.items():
            best = min(best, lead + row[w] + tail)
    return float(best)


def merge_degree_two(net: Network) -> Network:
    """Join pairs of edges meeting at degree-2 vertices into single edges.

    The point set of the network is unchanged; only its graph
    representation gets coarser.  Loops at a degree-2 vertex are kept.
    """
    verts = np.array(net.vertices)
    edges = [(e.start, e.end, np.array(e.polyline)) for e in net.edges]
    while True:
        deg = np.zeros(len(verts), dtype=int)
        inc: dict[int, list[int]] = {}
        for m, (i, j, _) in enumerate(edges):
            deg[i] += 1
            deg[j] += 1
            inc.setdefault(i, []).append(m)
            if j != i:
                inc.setdefault(j, []).append(m)
        target = None
        for v in np.flatnonzero(deg == 2):
            ms = inc[int(v)]
            if len(ms) == 2:
                target = int(v), ms
                break
        if target is None:
            break
        v, (m1, m2) = target
        i1, j1, p1 = edges[m1]
        i2, j2, p2 = edges[m2]
        if j1 != v:
            i1, j1, p1 = j1, i1, p1[::-1]
        if i2 != v:
            i2, j2, p2 = j2, i2, p2[::-1]
        merged = (i1, j2, np.vstack([p1, p2[1:]]))
        lo, hi = sorted((m1, m2))
        edges[lo] = merged
        del edges[hi]
    return build_network(verts, edges)


def straight_network(vertices: Sequence, pairs: Sequence) -> Network:
    """Shorthand for a network of straight segments."""
    return build_network(vertices, [tuple(p) for p in pairs])
