"""Penalized Poisson intensity fitting on a network.

Observed points are binned along every edge.  Bin counts are modelled as
Poisson with mean ``exp(B(z) gamma) * h_m`` where ``z`` is the bin midpoint
and ``h_m`` the bin width, so ``log h_m`` enters as an offset.  The
coefficients maximise

    sum_bins [y * B(z) gamma - exp(B(z) gamma + log h_m)] - rho * gamma' K gamma

and the smoothing parameter ``rho`` is chosen by a generalized
Fellner-Schall fixed-point iteration.

Penalty scaling
---------------
The objective carries ``rho * gamma' K gamma`` (no factor one half), so the
gradient and curvature carry ``2 rho K``.  The Fellner-Schall update is
derived for a penalty written as ``(lam / 2) gamma' K gamma``, so it is
applied to ``lam = 2 rho`` and mapped back.  Applying it to ``rho`` directly
would select a different, much smoother fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import cached_property
import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .basis import NetworkBasis, build_basis, design_matrix, half_up_count
from .exceptions import ContractError, ConvergenceError
from .network import Network, NetworkPoint, check_points, embed_many, point_arrays
from .penalty import PenaltySet, build_penalty

__all__ = [
    "BinLayout",
    "BinnedCounts",
    "FitConfig",
    "FitResult",
    "FitSetup",
    "IntensityRatio",
    "NewtonResult",
    "PoissonDesign",
    "assemble_design",
    "bin_counts",
    "bin_layout",
    "evaluate_density",
    "evaluate_intensity",
    "fellner_schall_step",
    "fit_intensity",
    "intensity_ratio",
    "loglik_gradient_hessian",
    "newton_fit",
    "penalized_loglik",
    "prepare",
    "pseudo_inverse_trace",
]

# --------------------------------------------------------------------------
# binning


@dataclass(frozen=True, eq=False)
class BinLayout:
    """Equal-width bins along every edge."""

    network: Network
    h_global: float
    h_per_edge: np.ndarray
    bins_per_edge: np.ndarray

    @property
    def total_bins(self) -> int:
        return int(self.bins_per_edge.sum())

    @cached_property
    def first_bin(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.bins_per_edge)[:-1]]).astype(np.intp)

    @cached_property
    def bin_edge(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.bins_per_edge)), self.bins_per_edge)

    @cached_property
    def bin_width(self) -> np.ndarray:
        return np.repeat(self.h_per_edge, self.bins_per_edge)

    @cached_property
    def midpoints(self) -> np.ndarray:
        """Offset of every bin midpoint along its edge."""
        k = np.arange(self.total_bins) - self.first_bin[self.bin_edge]
        return (k + 0.5) * self.bin_width

    def boundaries(self, m: int) -> np.ndarray:
        return np.linspace(0.0, self.network.lengths[m], self.bins_per_edge[m] + 1)

    def refined(self, factor: int) -> "BinLayout":
        """Same layout with every bin split into ``factor`` equal parts."""
        return BinLayout(
            self.network, self.h_global / factor, self.h_per_edge / factor,
            self.bins_per_edge * factor,
        )


def bin_layout(net: Network, h: float, basis: NetworkBasis | None = None) -> BinLayout:
    """Per-edge bins of width close to ``h``.

    ``h`` must not exceed the basis knot distance.
    """
    if not h > 0:
        raise ContractError("bin width must be positive")
    if basis is not None and h > basis.layout.delta_global * (1 + 1e-12):
        raise ContractError(f"bin width h={h} exceeds knot distance {basis.layout.delta_global}")
    counts = np.array([max(half_up_count(d, h), 1) for d in net.lengths], dtype=np.intp)
    widths = net.lengths / counts
    counts.setflags(write=False)
    widths.setflags(write=False)
    return BinLayout(net, float(h), widths, counts)


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    counts: np.ndarray
    n_total: int


def resolve_vertex_points(net: Network, edges, offsets):
    """Move points sitting exactly on a vertex slightly into an edge.

    Such points are shifted by ``1e-9 * d_m`` into the lowest-index edge
    incident to the vertex.
    """
    edges = np.array(edges, dtype=np.intp)
    offsets = np.array(offsets, dtype=float)
    d = net.lengths[edges]
    at_start = offsets <= 0
    at_end = offsets >= d
    hits = np.flatnonzero(at_start | at_end)
    if len(hits) == 0:
        return edges, offsets
    warnings.warn(f"{len(hits)} point(s) lie on vertices and were moved onto an edge", stacklevel=3)
    for p in hits:
        e = net.edges[edges[p]]
        v = e.start if at_start[p] else e.end
        m, side = min(net.incidence[v])
        dm = net.lengths[m]
        edges[p] = m
        offsets[p] = 1e-9 * dm if side == 0 else dm - 1e-9 * dm
    return edges, offsets


def bin_counts(points, layout: BinLayout) -> BinnedCounts:
    """Count points per bin; bins are half-open, the last per edge closed."""
    edges, offsets = point_arrays(points)
    check_points(layout.network, edges, offsets)
    edges, offsets = resolve_vertex_points(layout.network, edges, offsets)
    k = np.floor(offsets / layout.h_per_edge[edges]).astype(np.intp)
    k = np.minimum(k, layout.bins_per_edge[edges] - 1)
    idx = layout.first_bin[edges] + k
    counts = np.bincount(idx, minlength=layout.total_bins)
    return BinnedCounts(counts, int(len(edges)))


# --------------------------------------------------------------------------
# likelihood


@dataclass(frozen=True, eq=False)
class PoissonDesign:
    """Everything the likelihood needs, assembled once per data set."""

    B: sparse.csr_matrix
    y: np.ndarray
    log_offset: np.ndarray
    D: sparse.csr_matrix
    K: sparse.csr_matrix
    rank: int
    order: int
    null: np.ndarray  # orthonormal columns spanning the penalty null space

    @property
    def n(self) -> float:
        return float(self.y.sum())

    @property
    def dimension(self) -> int:
        return self.B.shape[1]


def assemble_design(layout: BinLayout, binned: BinnedCounts, basis: NetworkBasis,
                    penalty: PenaltySet, order: int = 1) -> PoissonDesign:
    B = design_matrix(basis, layout.bin_edge, layout.midpoints)
    return PoissonDesign(
        B=B,
        y=np.asarray(binned.counts, dtype=float),
        log_offset=np.log(layout.bin_width),
        D=penalty.difference(order).astype(float),
        K=penalty.matrix(order).astype(float),
        rank=penalty.rank(order),
        order=order,
        null=penalty.null_basis(order),
    )


def _means(gamma, design: PoissonDesign):
    eta = design.B @ gamma
    return eta, np.exp(eta + design.log_offset)


def penalized_loglik(gamma, design: PoissonDesign, rho: float) -> float:
    """Penalized Poisson log-likelihood, constants dropped."""
    gamma = np.asarray(gamma, dtype=float)
    eta, lam = _means(gamma, design)
    dg = design.D @ gamma
    return float(design.y @ eta - lam.sum() - rho * (dg @ dg))


def loglik_gradient_hessian(gamma, design: PoissonDesign, rho: float):
    """Gradient and negative curvature of :func:`penalized_loglik`.

    Returns
    -------
    gradient : ndarray
        ``B'(y - lambda) - 2 rho K gamma``.
    curvature : scipy.sparse.csr_matrix
        ``B' W B + 2 rho K`` with ``W = diag(lambda)``; positive definite
        whenever ``rho > 0`` and the basis graph is connected.
    """
    gamma = np.asarray(gamma, dtype=float)
    _, lam = _means(gamma, design)
    # D'(D gamma) keeps the penalty gradient accurate when gamma is nearly constant
    grad = design.B.T @ (design.y - lam) - 2.0 * rho * (design.D.T @ (design.D @ gamma))
    BW = design.B.multiply(lam[:, None]).tocsr()
    curv = (design.B.T @ BW + (2.0 * rho) * design.K).tocsc()
    return grad, curv


class _Factor:
    """Cholesky (dense) or LU (sparse) factorisation of the curvature."""

    def __init__(self, H, dense_threshold: int):
        self.shape = H.shape
        self.dense = H.shape[0] <= dense_threshold
        if self.dense:
            self._cho = scipy.linalg.cho_factor(H.toarray(), lower=True, check_finite=False)
        else:
            self._lu = splinalg.splu(
                sparse.csc_matrix(H), permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0, options={"SymmetricMode": True},
            )

    def solve(self, b):
        if self.dense:
            return scipy.linalg.cho_solve(self._cho, b, check_finite=False)
        return self._lu.solve(np.asarray(b, dtype=float))

    def trace_solve(self, K, chunk: int = 256, low_rank=None) -> float:
        """``tr(H^{-1} M)`` for ``M = K - U V^T`` with ``low_rank = (U, V)``.

        ``K`` is sparse; the optional low-rank part is given by two dense
        ``(J, p)`` factors.
        """
        K = sparse.csc_matrix(K)
        J = K.shape[0]
        U, V = low_rank if low_rank is not None else (np.zeros((J, 0)), np.zeros((J, 0)))
        if self.dense:
            return float(np.trace(self.solve(K.toarray() - U @ V.T)))
        total = 0.0
        for lo in range(0, J, chunk):
            hi = min(J, lo + chunk)
            X = self.solve(K[:, lo:hi].toarray() - U @ V[lo:hi].T)
            total += float(np.trace(X[lo:hi]))
        return total


def _selected_inverse_trace(C, M) -> float:
    """``tr(C^{-1} M)`` for sparse SPD ``C`` and sparse symmetric ``M``.

    Only the entries of ``C^{-1}`` on the pattern of the Cholesky factor
    are formed (Takahashi recurrences), which is cheap when the factor is
    as sparse as it is on network bases.  The pattern of ``M`` must lie
    within that of ``C``.
    """
    C = sparse.csc_matrix(C)
    n = C.shape[0]
    lu = splinalg.splu(C, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise np.linalg.LinAlgError("factorisation pivoted off the diagonal")
    d = lu.U.diagonal()
    if np.any(d <= 0):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    L = sparse.csc_matrix(lu.L)
    # lu.L @ lu.U is C with rows and columns both permuted by perm_r
    inv_perm = lu.perm_r
    sigma: dict[tuple[int, int], float] = {}
    for j in range(n - 1, -1, -1):
        lo, hi = L.indptr[j], L.indptr[j + 1]
        rows = L.indices[lo:hi]
        vals = L.data[lo:hi]
        below = rows > j
        rows, vals = rows[below].tolist(), vals[below].tolist()
        col = {}
        for i in rows:
            acc = 0.0
            for k, l_kj in zip(rows, vals):
                acc -= sigma[(i, k) if i >= k else (k, i)] * l_kj
            col[i] = acc
        diag = 1.0 / d[j]
        for k, l_kj in zip(rows, vals):
            diag -= l_kj * col[k]
        for i, v in col.items():
            sigma[(i, j)] = v
        sigma[(j, j)] = diag
    M = sparse.coo_matrix(M)
    pi, pj = inv_perm[M.row], inv_perm[M.col]
    total = 0.0
    for a, b, v in zip(pi.tolist(), pj.tolist(), M.data.tolist()):
        total += v * sigma[(a, b) if a >= b else (b, a)]
    return total


def _trace_unpenalized(gram, penalty, null, *, order: int, dense_threshold: int) -> float:
    """``tr(H^{-1} A_perp)`` for ``H = A + P`` with ``P`` a penalty (PSD,
    null space spanned by the orthonormal columns of ``null``) and
    ``A_perp = A - A Z (Z^T A Z)^{-1} Z^T A`` the Gram matrix with that
    null space projected out.

    For ``P = c K`` this equals ``rank(K) - c tr(H^{-1} K)``, but every term
    here is a trace of positive semidefinite products, so it stays
    accurate when ``c`` is huge and the two terms on the right cancel.
    """
    gram = sparse.csr_matrix(gram)
    J = gram.shape[0]
    if J <= dense_threshold or order != 1:
        factor = _Factor((gram + penalty).tocsc(), dense_threshold)
        az = np.asarray(gram @ null)
        g = null.T @ az
        return factor.trace_solve(gram, low_rank=(az, az @ np.linalg.inv(g)))

    # First differences: the null space is one constant per component.
    # Dropping one coefficient per component fixes those constants; the
    # remaining coordinates carry A_perp + P exactly, which is C - R R^T
    # with C the reduced A + P, handled by Woodbury.
    members = null != 0
    anchors = members.argmax(axis=0)
    keep = np.setdiff1d(np.arange(J), anchors)
    ind = members.astype(float)
    a = np.asarray(gram @ ind)
    R = a[keep] / np.sqrt(np.einsum("ij,ij->j", ind, a))
    A_kk = gram[keep][:, keep]
    C = (A_kk + sparse.csr_matrix(penalty)[keep][:, keep]).tocsc()
    Y = _Factor(C, 0).solve(R)
    P = R.T @ Y
    Q = np.linalg.inv(np.eye(P.shape[0]) - P)
    head = _selected_inverse_trace(C, A_kk) - np.trace(P)
    tail = np.trace(Q @ (Y.T @ (A_kk @ Y) - P @ P))
    return float(head + tail)


@dataclass(frozen=True)
class NewtonResult:
    gamma: np.ndarray
    loglik: float
    iterations: int
    converged: bool


def _polish_constant(gamma, design: PoissonDesign):
    # the constant direction is penalty-free: its optimum is available in closed form
    n = design.n
    if n <= 0:
        return gamma
    _, lam = _means(gamma, design)
    return gamma + math.log(n / lam.sum())


def newton_fit(design: PoissonDesign, rho: float, init_gamma, *, max_iter: int = 100,
               dense_threshold: int = 2000) -> NewtonResult:
    """Maximise the penalized log-likelihood at fixed ``rho``.

    Damped Newton iterations: the step is halved until the objective does
    not decrease.  Iteration stops once the gradient max-norm falls below
    ``1e-8 * (1 + n)`` or the relative objective change drops below
    ``1e-10``.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations without meeting either criterion.
    """
    if rho < 0:
        raise ContractError("rho must be nonnegative")
    gamma = np.array(init_gamma, dtype=float)
    n = design.n
    gtol = 1e-8 * (1.0 + n)
    ll = penalized_loglik(gamma, design, rho)
    for it in range(1, max_iter + 1):
        grad, H = loglik_gradient_hessian(gamma, design, rho)
        if np.max(np.abs(grad)) < gtol:
            return NewtonResult(_polish_constant(gamma, design), ll, it - 1, True)
        try:
            step = _Factor(H, dense_threshold).solve(grad)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise ConvergenceError(f"curvature matrix is singular: {exc}", gamma, it) from exc
        decrement = float(grad @ step)
        t = 1.0
        noise = 1e-13 * max(1.0, abs(ll))
        for _ in range(40):
            cand = gamma + t * step
            ll_new = penalized_loglik(cand, design, rho)
            if np.isfinite(ll_new) and ll_new >= ll - noise:
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed to find an ascent step", gamma, it)
        change = abs(ll_new - ll)
        gamma, ll = cand, ll_new
        small = 1e-10 * max(1.0, abs(ll))
        if (t == 1.0 and 0.5 * decrement <= small) or (t < 1.0 and change <= small):
            return NewtonResult(_polish_constant(gamma, design), ll, it, True)
    raise ConvergenceError(f"Newton iterations did not converge in {max_iter} steps", gamma, max_iter)


def pseudo_inverse_trace(rho: float, rank: int) -> float:
    """``tr((rho K)^- K)`` for a Moore-Penrose inverse: ``rank / rho``."""
    return rank / rho


def _weighted_gram(gamma, design: PoissonDesign) -> sparse.csr_matrix:
    _, lam = _means(gamma, design)
    return (design.B.T @ design.B.multiply(lam[:, None]).tocsr()).tocsr()


def _fs_update(design: PoissonDesign, gamma, rho: float, dense_threshold: int) -> float:
    # The objective penalises rho * |D gamma|^2, i.e. (1/2) * lam * gamma'K gamma with
    # lam = 2 rho.  The update is applied to lam and mapped back:
    #   lam_new = lam * (rank / lam - tr((A + lam K)^{-1} K)) / gamma'K gamma
    # with the bracket times lam rewritten as tr((A + lam K)^{-1} A_perp).
    dg = design.D @ gamma
    quad = float(dg @ dg)
    if not quad > 0:
        return math.inf
    gram = _weighted_gram(gamma, design)
    tr = _trace_unpenalized(gram, (2.0 * rho) * design.K, design.null,
                            order=design.order, dense_threshold=dense_threshold)
    return tr / (2.0 * quad)


def fellner_schall_step(gamma_hat, rho: float, design: PoissonDesign, *,
                        dense_threshold: int = 2000) -> float:
    """One generalized Fellner-Schall update of the smoothing parameter.

    ``gamma_hat`` must maximise the penalized log-likelihood at ``rho``.
    Returns ``inf`` when ``gamma_hat`` lies in the penalty null space, i.e.
    the criterion keeps asking for more smoothing.
    """
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    return _fs_update(design, gamma_hat, rho, dense_threshold)


# --------------------------------------------------------------------------
# full fit


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit_intensity`.

    ``delta`` (knot distance) and ``h`` (bin width) have no defaults.
    """

    delta: float
    h: float
    order: int = 1
    rho0: float = 1.0
    rho_cap: float = 1e10
    rho_tol: float = 1e-3
    max_outer: int = 50
    max_newton: int = 100
    dense_threshold: int = 2000
    probe_after: int = 3

    def __post_init__(self):
        if not (self.delta > 0 and self.h > 0):
            raise ContractError("delta and h must be positive")
        if self.h > self.delta * (1 + 1e-12):
            raise ContractError(f"bin width h={self.h} exceeds knot distance delta={self.delta}")
        if self.order not in (1, 2):
            raise ContractError("penalty order must be 1 or 2")
        if not (self.rho0 > 0 and self.rho_cap > self.rho0):
            raise ContractError("need 0 < rho0 < rho_cap")
        if self.probe_after < 1 or self.max_outer < 1 or self.max_newton < 1:
            raise ContractError("iteration limits must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FitSetup:
    """Basis, bins and penalties shared by every fit on one network."""

    basis: NetworkBasis
    bins: BinLayout
    penalty: PenaltySet

    @property
    def network(self) -> Network:
        return self.basis.network


def prepare(net: Network, config: FitConfig) -> FitSetup:
    basis = build_basis(net, config.delta)
    return FitSetup(basis, bin_layout(net, config.h, basis), build_penalty(basis))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted coefficients plus everything needed to evaluate them."""

    gamma: np.ndarray
    rho: float
    penalty_order: int
    n: int
    edf: float
    fitted_mass: float
    outer_iterations: int
    newton_iterations: int
    converged: bool
    rho_capped: bool
    rho_path: tuple
    config: FitConfig
    basis: NetworkBasis
    bins: BinLayout = field(repr=False)

    @property
    def network(self) -> Network:
        return self.basis.network

    @property
    def mass_error(self) -> float:
        return abs(self.fitted_mass - self.n)

    def log_intensity(self, points) -> np.ndarray:
        edges, offsets = point_arrays(points)
        return design_matrix(self.basis, edges, offsets) @ self.gamma

    def intensity(self, points) -> np.ndarray:
        return np.exp(self.log_intensity(points))

    def density(self, points, n: float | None = None) -> np.ndarray:
        n = self.n if n is None else n
        if not n > 0:
            raise ContractError("density needs a positive point count")
        return self.intensity(points) / n


def fit_intensity(net: Network, points, config: FitConfig | None = None, *,
                  setup: FitSetup | None = None, **kwargs) -> FitResult:
    """Estimate the intensity of a point pattern on ``net``.

    Parameters
    ----------
    net : Network
    points : sequence of NetworkPoint or (edges, offsets) pair
    config : FitConfig, optional
        Alternatively pass its fields as keyword arguments.
    setup : FitSetup, optional
        Reuse a basis/bin/penalty bundle from :func:`prepare`.

    Returns
    -------
    FitResult

    Notes
    -----
    The smoothing parameter starts at ``rho0`` and is updated until two
    successive values differ by at most ``rho_tol`` relative.  Each inner
    fit is warm-started from the previous coefficients.  If the update
    keeps growing past ``rho_cap`` the fit is redone at the cap and
    flagged with ``rho_capped``: the estimate is then effectively constant.
    After ``probe_after`` consecutive increases the update is evaluated
    once at the cap; if it would still increase there, the cap is taken
    straight away.
    """
    if config is None:
        config = FitConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a FitConfig or keyword settings, not both")
    edges, offsets = point_arrays(points)
    if len(edges) == 0:
        raise ContractError("no data: cannot fit an empty point pattern")
    if setup is None:
        setup = prepare(net, config)
    elif not setup.network.same_as(net):
        raise ContractError("setup was prepared for a different network")
    binned = bin_counts((edges, offsets), setup.bins)
    design = assemble_design(setup.bins, binned, setup.basis, setup.penalty, config.order)
    n = binned.n_total

    gamma = np.full(design.dimension, math.log((n + 1) / net.total_length))
    rho = float(config.rho0)
    path = []
    newton_total = 0
    converged = capped = probed = False
    rising = 0
    previous = None
    outer = 0

    def refit(at, start):
        nonlocal newton_total
        r = newton_fit(design, at, start, max_iter=config.max_newton,
                       dense_threshold=config.dense_threshold)
        newton_total += r.iterations
        return r.gamma

    for outer in range(1, config.max_outer + 1):
        gamma = refit(rho, gamma)
        path.append(rho)
        rho_new = _fs_update(design, gamma, rho, config.dense_threshold)
        if not rho_new > 0:
            raise ConvergenceError(f"smoothing parameter update left (0, inf): {rho_new}", gamma, outer)
        if rho_new >= config.rho_cap:
            rho = float(config.rho_cap)
            gamma = refit(rho, gamma)
            path.append(rho)
            converged = capped = True
            break
        if abs(rho_new - rho) <= config.rho_tol * rho:
            converged = True
            break
        rising = rising + 1 if rho_new > rho else 0
        if rising >= config.probe_after and not probed:
            # Steady growth can take hundreds of steps to reach the cap.  If
            # the update still asks for more smoothing at the cap itself,
            # the iteration is heading there: jump.
            probed = True
            at_cap = refit(float(config.rho_cap), gamma)
            if _fs_update(design, at_cap, config.rho_cap, config.dense_threshold) > config.rho_cap:
                rho, gamma = float(config.rho_cap), at_cap
                path.append(rho)
                converged = capped = True
                break
        # Secant on log(update / rho) = 0, which has the same fixed points as
        # the plain update but does not crawl when the update ratio stays
        # close to one.  Kept to at most 8 plain steps, in the same direction.
        x, g = math.log(rho), math.log(rho_new / rho)
        step = g
        if previous is not None and x != previous[0]:
            slope = (g - previous[1]) / (x - previous[0])
            if slope < 0:
                step = math.copysign(min(-g / slope * math.copysign(1.0, g), 8.0 * abs(g)), g)
        previous = (x, g)
        proposal = math.exp(x + step)
        rho = proposal if proposal < config.rho_cap else rho_new

    _, lam = _means(gamma, design)
    gram = _weighted_gram(gamma, design)
    # tr(H^{-1} A) split into the null-space part, which is exact, and the rest
    edf = design.null.shape[1] + _trace_unpenalized(
        gram, (2.0 * rho) * design.K, design.null, order=config.order,
        dense_threshold=config.dense_threshold)
    mass = float(lam.sum())
    if abs(mass - n) > 1e-8 * n:
        raise ConvergenceError(f"fitted mass {mass} does not match {n} points", gamma, outer)
    gamma.setflags(write=False)
    return FitResult(
        gamma=gamma, rho=rho, penalty_order=config.order, n=n, edf=float(edf),
        fitted_mass=mass, outer_iterations=outer, newton_iterations=newton_total,
        converged=converged, rho_capped=capped, rho_path=tuple(path), config=config,
        basis=setup.basis, bins=setup.bins,
    )


def evaluate_intensity(fit: FitResult, z: NetworkPoint) -> float:
    return float(fit.intensity([z])[0])


def evaluate_density(fit: FitResult, z: NetworkPoint, n: float) -> float:
    if not n > 0:
        raise ContractError("density needs a positive point count")
    return evaluate_intensity(fit, z) / n


@dataclass(frozen=True, eq=False)
class IntensityRatio:
    """``numerator / denominator`` where the denominator reaches ``floor``."""

    numerator: FitResult
    denominator: FitResult
    floor: float

    def defined(self, points) -> np.ndarray:
        return self.denominator.intensity(points) >= self.floor

    def __call__(self, points) -> np.ndarray:
        den = self.denominator.intensity(points)
        num = self.numerator.intensity(points)
        out = np.full(len(den), np.nan)
        ok = den >= self.floor
        out[ok] = num[ok] / den[ok]
        return out

    def support_length(self, step: float | None = None) -> float:
        """Approximate arc length of the region where the ratio is defined."""
        if step is None:
            bins = self.denominator.bins.refined(4)
        else:
            bins = bin_layout(self.denominator.network, step)
        ok = self.defined((bins.bin_edge, bins.midpoints))
        return float(np.sum(bins.bin_width[ok]))


def intensity_ratio(fit_num: FitResult, fit_den: FitResult, floor: float) -> IntensityRatio:
    """Ratio of two fitted intensities on the same network.

    The ratio is left undefined (``nan``) wherever the denominator
    intensity falls below ``floor``.
    """
    if not floor > 0:
        raise ContractError("floor must be positive")
    if not fit_num.network.same_as(fit_den.network):
        raise ContractError("fits live on different networks")
    return IntensityRatio(fit_num, fit_den, float(floor))


def sample_curve(fit: FitResult, step: float | None = None):
    """Sample positions along every edge for dumps and plots.

    With ``step`` the samples are spaced ``step`` apart and include both
    endpoints of every edge; without it they are the fit's bin midpoints.
    Returns ``(edges, offsets, coords)``.
    """
    net = fit.network
    if step is None:
        edges, offsets = fit.bins.bin_edge, fit.bins.midpoints
    else:
        if not step > 0:
            raise ContractError("step must be positive")
        e_list, o_list = [], []
        for m, d in enumerate(net.lengths):
            offs = np.arange(0.0, d, step)
            if d - offs[-1] <= 1e-9 * d:
                offs = offs[:-1]
            offs = np.append(offs, d)
            e_list.append(np.full(len(offs), m))
            o_list.append(offs)
        edges, offsets = np.concatenate(e_list), np.concatenate(o_list)
    return edges, offsets, embed_many(net, edges, offsets)
