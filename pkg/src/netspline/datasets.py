"""Built-in networks for examples, tests and simulation studies."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csgraph, coo_matrix

from .network import Network, build_network

# 10 vertices, 10 straight edges (one cycle plus branches) inside the unit
# square, total length 2.905
_STANDIN_VERTICES = [
    (0.12921341434772893, 0.17041192386464793),
    (0.458801490483081, 0.12921341434772893),
    (0.870786585652271, 0.211610433381567),
    (0.582397019033838, 0.458801490483081),
    (0.252808942898486, 0.5),
    (0.829588076135352, 0.664794038067676),
    (0.5411985095169191, 0.870786585652271),
    (0.17041192386464793, 0.829588076135352),
    (0.37640447144924294, 0.664794038067676),
    (0.7059925475845951, 0.29400745241540494),
]
_STANDIN_EDGES = [(0, 1), (1, 3), (3, 4), (4, 0), (1, 9), (9, 2), (3, 5), (4, 8), (8, 6), (8, 7)]


def simplenet_standin() -> Network:
    """Small connected test network with ``|E| = |V| = 10`` and length 2.905."""
    return build_network(_STANDIN_VERTICES, _STANDIN_EDGES)


def street_grid(nx: int = 16, ny: int = 17, *, drop: int = 8, total_length: float = 31150.0,
                jitter: float = 0.15, bend_fraction: float = 0.2, seed: int = 0) -> Network:
    """Synthetic street-like network: a jittered grid with a few streets removed.

    Some streets get a bend in the middle so the network also exercises
    polyline edges.  Coordinates are scaled so the total length matches
    ``total_length``.  With the defaults the network has 503 edges.
    """
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel()])
    verts += rng.uniform(-jitter, jitter, size=verts.shape)
    vid = np.arange(nx * ny).reshape(nx, ny)
    pairs = [(vid[i, j], vid[i + 1, j]) for i in range(nx - 1) for j in range(ny)]
    pairs += [(vid[i, j], vid[i, j + 1]) for i in range(nx) for j in range(ny - 1)]

    order = rng.permutation(len(pairs))
    removed: set[int] = set()
    for k in order:
        if len(removed) == drop:
            break
        trial = [p for q, p in enumerate(pairs) if q not in removed and q != k]
        a = np.array(trial)
        g = coo_matrix((np.ones(len(a)), (a[:, 0], a[:, 1])), shape=(len(verts),) * 2)
        n_comp, _ = csgraph.connected_components(g, directed=False)
        if n_comp == 1:
            removed.add(int(k))
    kept = [p for q, p in enumerate(pairs) if q not in removed]

    edges = []
    for i, j in kept:
        a, b = verts[i], verts[j]
        if rng.uniform() < bend_fraction:
            d = b - a
            normal = np.array([-d[1], d[0]])
            mid = 0.5 * (a + b) + rng.uniform(-0.15, 0.15) * normal
            edges.append((i, j, np.vstack([a, mid, b])))
        else:
            edges.append((i, j))
    raw = build_network(verts, edges)
    scale = total_length / raw.total_length
    scaled_edges = [(e.start, e.end, e.polyline * scale) for e in raw.edges]
    return build_network(raw.vertices * scale, scaled_edges)
