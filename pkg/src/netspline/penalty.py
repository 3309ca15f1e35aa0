"""Difference penalties on the basis-adjacency graph.

Two splines are neighbours when their supports overlap on a stretch of
positive length.  First-order differences run over neighbouring pairs,
second-order differences over pairs at graph distance two together with
each of their common neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph

from .basis import NetworkBasis
from .exceptions import ContractError

__all__ = [
    "PenaltySet",
    "basis_adjacency",
    "build_penalty",
    "difference_matrices",
    "difference_rows",
    "null_space",
    "penalty_matrix",
    "penalty_value",
    "shortest_path_matrix",
]


def basis_adjacency(basis: NetworkBasis) -> sparse.csr_matrix:
    """Symmetric 0/1 adjacency of the basis functions.

    Along every edge, the splines peaking at consecutive knots share one
    knot interval; no other pair overlaps on positive length.
    """
    rows, cols = [], []
    for m in range(basis.network.n_edges):
        idx = basis.knot_index(m)
        rows.append(idx[:-1])
        cols.append(idx[1:])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = r != c
    r, c = r[off], c[off]
    J = basis.dimension
    a = sparse.coo_matrix(
        (np.ones(2 * len(r), dtype=np.int8), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(J, J),
    ).tocsr()
    a.data[:] = 1
    a.sort_indices()
    return a


def shortest_path_matrix(adjacency) -> np.ndarray:
    """All-pairs hop distances by one breadth-first sweep per source.

    Returns a float array holding exact integer distances, with ``inf``
    between splines in different components.
    """
    a = sparse.csr_matrix(adjacency)
    J = a.shape[0]
    indptr, indices = a.indptr, a.indices
    out = np.full((J, J), np.inf)
    for s in range(J):
        dist = out[s]
        dist[s] = 0
        frontier = np.array([s])
        level = 0
        while len(frontier):
            level += 1
            nbrs = np.concatenate([indices[indptr[v]:indptr[v + 1]] for v in frontier])
            nbrs = np.unique(nbrs)
            nbrs = nbrs[np.isinf(dist[nbrs])]
            dist[nbrs] = level
            frontier = nbrs
    return out


def _rows_to_matrix(rows: list[tuple], coeffs: tuple, J: int) -> sparse.csr_matrix:
    n = len(rows)
    if n == 0:
        return sparse.csr_matrix((0, J), dtype=np.int64)
    idx = np.asarray(rows, dtype=np.intp)
    r = np.repeat(np.arange(n), idx.shape[1])
    data = np.tile(np.asarray(coeffs, dtype=np.int64), n)
    return sparse.csr_matrix((data, (r, idx.ravel())), shape=(n, J))


def difference_matrices(shortest_paths) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """First and second order difference matrices from hop distances.

    Parameters
    ----------
    shortest_paths : ndarray, shape (J, J)
        Output of :func:`shortest_path_matrix`.

    Returns
    -------
    d1, d2 : scipy.sparse.csr_matrix
        ``d1`` has a row ``e_i - e_j`` for every pair at distance one;
        ``d2`` a row ``e_i - 2 e_k + e_j`` for every pair at distance two
        and every common neighbour ``k``.  Rows are sorted by ``(i, j, k)``.
    """
    S = np.asarray(shortest_paths)
    J = S.shape[0]
    i1, j1 = np.nonzero(np.triu(S == 1, 1))
    pairs = sorted(zip(i1.tolist(), j1.tolist()))
    triples = []
    one = S == 1
    i2, j2 = np.nonzero(np.triu(S == 2, 1))
    for i, j in zip(i2.tolist(), j2.tolist()):
        for k in np.flatnonzero(one[i] & one[j]).tolist():
            triples.append((i, j, k))
    triples.sort()
    d1 = _rows_to_matrix(pairs, (1, -1), J)
    d2 = _rows_to_matrix([(i, k, j) for i, j, k in triples], (1, -2, 1), J)
    return d1, d2


def difference_rows(adjacency, order: int) -> sparse.csr_matrix:
    """Difference matrix of the given order straight from the adjacency.

    Equivalent to the matching output of :func:`difference_matrices` but
    never forms the dense ``J x J`` distance table, so it scales to large
    bases.
    """
    a = sparse.csr_matrix(adjacency)
    J = a.shape[0]
    if order == 1:
        up = sparse.triu(a, 1).tocoo()
        pairs = sorted(zip(up.row.tolist(), up.col.tolist()))
        return _rows_to_matrix(pairs, (1, -1), J)
    if order != 2:
        raise ContractError("only first and second order differences are supported")
    triples = []
    for k in range(J):
        nb = a.indices[a.indptr[k]:a.indptr[k + 1]]
        if len(nb) < 2:
            continue
        ii, jj = np.triu_indices(len(nb), 1)
        i, j = nb[ii], nb[jj]
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        linked = np.asarray(a[lo, hi]).ravel() != 0
        for x, y in zip(lo[~linked].tolist(), hi[~linked].tolist()):
            triples.append((x, y, k))
    triples.sort()
    return _rows_to_matrix([(i, k, j) for i, j, k in triples], (1, -2, 1), J)


def _penalty_parts(d, order: int | None):
    d = sparse.csr_matrix(d)
    J = d.shape[1]
    k = (d.T @ d).tocsr()
    k.sort_indices()
    if order is None:
        order = int(np.abs(d).sum(axis=1).max()) // 2 if d.shape[0] else 1
    if order == 1:
        pattern = (abs(k) > 0).astype(np.int8) + sparse.identity(J, dtype=np.int8, format="csr")
        n_comp, labels = csgraph.connected_components(pattern, directed=False)
        null = np.zeros((J, n_comp))
        null[np.arange(J), labels] = 1.0
        null /= np.sqrt(null.sum(axis=0))
        return k, J - n_comp, null
    if d.shape[0] == 0:
        return k, 0, np.eye(J)
    r, piv = scipy.linalg.qr(d.toarray().astype(float), mode="r", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > 1e-9 * diag.max())) if len(diag) else 0
    # null vectors of the leading block [R11 R12] in pivoted coordinates
    free = np.vstack([
        -scipy.linalg.solve_triangular(r[:rank, :rank], r[:rank, rank:]),
        np.eye(J - rank),
    ])
    null = np.empty_like(free)
    null[piv] = free
    return k, rank, np.linalg.qr(null)[0]


def penalty_matrix(d, order: int | None = None) -> tuple[sparse.csr_matrix, int]:
    """``K = D^T D`` and its rank.

    For first differences the rank is ``J`` minus the number of connected
    components of the graph the rows of ``D`` describe.  Otherwise it is
    read off a column-pivoted QR factorisation, counting diagonal entries
    above ``1e-9`` times the largest one.
    """
    k, rank, _ = _penalty_parts(d, order)
    return k, rank


def null_space(d, order: int | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``D``."""
    return _penalty_parts(d, order)[2]


def penalty_value(gamma, k) -> float:
    """Quadratic form ``gamma^T K gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if k.shape != (len(gamma), len(gamma)):
        raise ContractError(f"penalty of shape {k.shape} does not match {len(gamma)} coefficients")
    return float(gamma @ (k @ gamma))


@dataclass(frozen=True, eq=False)
class PenaltySet:
    """Adjacency, hop distances, difference and penalty matrices of a basis.

    Everything beyond the adjacency is computed on first access; the dense
    hop-distance table in particular is only built when asked for.
    """

    adjacency: sparse.csr_matrix

    @property
    def dimension(self) -> int:
        return self.adjacency.shape[0]

    @cached_property
    def shortest_paths(self) -> np.ndarray:
        return shortest_path_matrix(self.adjacency)

    @cached_property
    def d1(self) -> sparse.csr_matrix:
        return difference_rows(self.adjacency, 1)

    @cached_property
    def d2(self) -> sparse.csr_matrix:
        return difference_rows(self.adjacency, 2)

    @cached_property
    def _k1(self):
        return _penalty_parts(self.d1, 1)

    @cached_property
    def _k2(self):
        return _penalty_parts(self.d2, 2)

    @property
    def k1(self) -> sparse.csr_matrix:
        return self._k1[0]

    @property
    def k2(self) -> sparse.csr_matrix:
        return self._k2[0]

    @property
    def rank_k1(self) -> int:
        return self._k1[1]

    @property
    def rank_k2(self) -> int:
        return self._k2[1]

    def null_basis(self, order: int) -> np.ndarray:
        """Orthonormal basis of the penalty's null space, one column per direction."""
        if order not in (1, 2):
            raise ContractError("penalty order must be 1 or 2")
        return (self._k1 if order == 1 else self._k2)[2]

    def difference(self, order: int) -> sparse.csr_matrix:
        if order not in (1, 2):
            raise ContractError("penalty order must be 1 or 2")
        return self.d1 if order == 1 else self.d2

    def matrix(self, order: int) -> sparse.csr_matrix:
        if order not in (1, 2):
            raise ContractError("penalty order must be 1 or 2")
        return self.k1 if order == 1 else self.k2

    def rank(self, order: int) -> int:
        if order not in (1, 2):
            raise ContractError("penalty order must be 1 or 2")
        return self.rank_k1 if order == 1 else self.rank_k2


def build_penalty(basis: NetworkBasis) -> PenaltySet:
    return PenaltySet(basis_adjacency(basis))
