"""Simulation of point patterns on networks and ISE studies.

Intensities are given up to a constant (:class:`IntensitySpec`) and bound
to a network with :func:`bind`, which computes the normalising constant by
quadrature so that the intensity integrates to the requested point count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import ContractError, ConvergenceError, StudyError
from .model import FitConfig, FitResult, fit_intensity, prepare
from .network import Network, NetworkPoint, embed_many

__all__ = [
    "BoundIntensity",
    "IntensitySpec",
    "SensitivityTable",
    "StudyReport",
    "bind",
    "derive_seed",
    "ise",
    "run_study",
    "sample_points",
    "sensitivity_grid",
]

log = logging.getLogger(__name__)


def sqrt_y_exp_neg_xy(x, y):
    return np.sqrt(y) * np.exp(-x * y)


FUNCTIONS: dict[str, Callable] = {
    "sqrt_y_exp_neg_xy": sqrt_y_exp_neg_xy,
}


@dataclass(frozen=True)
class IntensitySpec:
    """Shape of an intensity, independent of network and total mass.

    ``kind`` is ``"uniform"``, ``"function"`` (a function of the embedded
    coordinates, looked up by ``name`` in :data:`FUNCTIONS` or given
    directly) or ``"table"`` (one nonnegative weight per edge).
    """

    kind: str = "uniform"
    name: str = ""
    function: Callable | None = field(default=None, compare=False)
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "function", "table"):
            raise ContractError(f"unknown intensity kind {self.kind!r}")
        if self.kind == "function" and self.function is None:
            if self.name not in FUNCTIONS:
                raise ContractError(f"unknown intensity function {self.name!r}")
            object.__setattr__(self, "function", FUNCTIONS[self.name])
        if self.kind == "table":
            if self.table is None or min(self.table) < 0 or not sum(self.table) > 0:
                raise ContractError("table intensity needs nonnegative weights, not all zero")

    @classmethod
    def uniform(cls) -> "IntensitySpec":
        return cls("uniform")

    @classmethod
    def named(cls, name: str) -> "IntensitySpec":
        return cls("function", name=name)

    @classmethod
    def per_edge(cls, weights: Sequence[float]) -> "IntensitySpec":
        return cls("table", name="table", table=tuple(float(w) for w in weights))

    def label(self) -> str:
        return self.kind if self.kind == "uniform" else self.name or self.kind


def _cells(net: Network, step: float):
    counts = np.maximum(np.ceil(net.lengths / step).astype(np.intp), 1)
    widths = net.lengths / counts
    edge = np.repeat(np.arange(net.n_edges), counts)
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(counts.sum()) - first[edge]
    mid = (k + 0.5) * widths[edge]
    return edge, mid, widths[edge], counts


@dataclass(frozen=True, eq=False)
class BoundIntensity:
    """An :class:`IntensitySpec` on a specific network, normalised."""

    spec: IntensitySpec
    network: Network
    normalizer: float
    grid_step: float

    def shape(self, edges, offsets) -> np.ndarray:
        """Unnormalised intensity at network points."""
        edges = np.asarray(edges, dtype=np.intp)
        if self.spec.kind == "uniform":
            return np.ones(len(edges))
        if self.spec.kind == "table":
            return np.asarray(self.spec.table, dtype=float)[edges]
        xy = embed_many(self.network, edges, offsets)
        with np.errstate(invalid="ignore"):
            vals = np.asarray(self.spec.function(xy[:, 0], xy[:, 1]), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ContractError("intensity function must be finite and nonnegative on the network")
        return vals

    def intensity(self, edges, offsets, n: float) -> np.ndarray:
        """Intensity scaled to integrate to ``n`` over the network."""
        return n * self.shape(edges, offsets) / self.normalizer

    def edge_masses(self) -> np.ndarray:
        """Fraction of the total mass on each edge."""
        edge, mid, width, _ = _cells(self.network, self.grid_step)
        w = self.shape(edge, mid) * width
        return np.bincount(edge, weights=w, minlength=self.network.n_edges) / self.normalizer


def bind(spec: IntensitySpec, net: Network, step: float | None = None) -> BoundIntensity:
    """Attach ``spec`` to ``net`` and compute its normalising constant.

    The constant is a midpoint-rule integral of the unnormalised intensity
    with cells no longer than ``step`` (default ``|L| / 20000``).
    """
    if step is None:
        step = net.total_length / 20000
    if spec.kind == "uniform":
        return BoundIntensity(spec, net, net.total_length, step)
    edge, mid, width, _ = _cells(net, step)
    probe = BoundIntensity(spec, net, 1.0, step)
    c = float(np.sum(probe.shape(edge, mid) * width))
    if not c > 0:
        raise ContractError("intensity integrates to zero on this network")
    return BoundIntensity(spec, net, c, step)


def _as_bound(truth, net: Network) -> BoundIntensity:
    if isinstance(truth, BoundIntensity):
        if not truth.network.same_as(net):
            raise ContractError("intensity is bound to a different network")
        return truth
    return bind(truth, net)


def sample_arrays(net: Network, truth, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`sample_points` but returns ``(edges, offsets)`` arrays."""
    bound = _as_bound(truth, net)
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0)
    if n < 0:
        raise ContractError("n must be nonnegative")
    if bound.spec.kind == "uniform":
        p = net.lengths / net.total_length
        edges = rng.choice(net.n_edges, size=n, p=p)
        offsets = rng.uniform(0.0, 1.0, size=n) * net.lengths[edges]
        return edges, offsets

    edge, mid, width, counts = _cells(net, bound.grid_step)
    mass = bound.shape(edge, mid) * width
    edge_mass = np.bincount(edge, weights=mass, minlength=net.n_edges)
    u_edge = rng.uniform(size=n)
    u_off = rng.uniform(size=n)
    cum_edge = np.cumsum(edge_mass)
    picked = np.searchsorted(cum_edge, u_edge * cum_edge[-1], side="right")
    picked = np.minimum(picked, net.n_edges - 1)
    # edges with zero mass can only be hit through rounding at the boundary
    while np.any(edge_mass[picked] <= 0):
        bad = edge_mass[picked] <= 0
        picked[bad] = np.searchsorted(cum_edge, rng.uniform(size=bad.sum()) * cum_edge[-1], side="right")
        picked = np.minimum(picked, net.n_edges - 1)
    offsets = np.empty(n)
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])
    for m in np.unique(picked):
        sel = picked == m
        cell_mass = mass[first[m]:first[m] + counts[m]]
        cdf = np.concatenate([[0.0], np.cumsum(cell_mass)])
        grid = np.linspace(0.0, net.lengths[m], counts[m] + 1)
        offsets[sel] = np.interp(u_off[sel] * cdf[-1], cdf, grid)
    return picked.astype(np.intp), offsets


def sample_points(net: Network, spec, n: int, rng_seed) -> list[NetworkPoint]:
    """Draw ``n`` independent points from the normalised intensity.

    The edge is chosen with probability proportional to its mass and the
    offset by inverting the cumulative mass along a fine grid on that
    edge.  The uniform intensity samples edges by length and offsets
    uniformly.
    """
    edges, offsets = sample_arrays(net, spec, n, rng_seed)
    return [NetworkPoint(int(m), float(t)) for m, t in zip(edges, offsets)]


def ise(fit: FitResult, truth, n: float, *, refine: int = 4) -> float:
    """Integrated squared error between true and fitted intensity, over ``n**2``.

    Midpoint rule on the fit's bin grid with every bin split ``refine``
    times.
    """
    bound = _as_bound(truth, fit.network)
    bins = fit.bins.refined(refine)
    pts = (bins.bin_edge, bins.midpoints)
    diff = bound.intensity(*pts, n) - fit.intensity(pts)
    return float(np.sum(diff * diff * bins.bin_width) / n ** 2)


def derive_seed(seed: int, n: int, replicate: int) -> int:
    """Deterministic per-replicate seed from the study seed."""
    return int(np.random.SeedSequence([seed, n, replicate]).generate_state(1)[0])


@dataclass
class StudyReport:
    """Raw per-replicate results plus per-``n`` summaries."""

    config: dict
    records: list[dict]

    @property
    def summary(self) -> dict[int, dict]:
        out = {}
        for n in sorted({r["n"] for r in self.records}):
            rows = [r for r in self.records if r["n"] == n]
            ok = np.array([r["ise"] for r in rows if r["ok"]], dtype=float)
            out[n] = {
                "mean_ise": float(ok.mean()) if len(ok) else math.nan,
                "sd_ise": float(ok.std(ddof=1)) if len(ok) > 1 else math.nan,
                "replicates": len(rows),
                "failures": sum(not r["ok"] for r in rows),
                "capped": sum(bool(r.get("capped")) for r in rows if r["ok"]),
            }
        return out

    def mean_ise(self, n: int) -> float:
        return self.summary[n]["mean_ise"]

    def to_json(self) -> str:
        summary = {str(k): v for k, v in self.summary.items()}
        return json.dumps(
            {"version": 1, "config": self.config, "summary": summary, "records": self.records},
            indent=1, sort_keys=True,
        )

    def write(self, json_path, csv_path=None) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        if csv_path is not None:
            write_records_csv(self.records, csv_path)


RECORD_FIELDS = ["n", "replicate", "seed", "ise", "rho_hat", "converged", "capped", "ok"]


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in sorted(records, key=lambda r: (r["n"], r["replicate"])):
            w.writerow({k: (repr(v) if isinstance(v, float) else "" if v is None else v)
                        for k, v in r.items()})


def _replicate(net, bound, setup, config, n, s, seed) -> dict:
    rs = derive_seed(seed, n, s)
    rec = {"n": n, "replicate": s, "seed": rs}
    try:
        pts = sample_arrays(net, bound, n, rs)
        fit = fit_intensity(net, pts, config, setup=setup)
        if fit.mass_error > 1e-8 * n:
            raise ConvergenceError("fitted mass differs from the point count", fit.gamma)
        rec.update(ise=ise(fit, bound, n), rho_hat=fit.rho, converged=fit.converged,
                   capped=fit.rho_capped, ok=True)
    except (ConvergenceError, ContractError, np.linalg.LinAlgError) as exc:
        log.warning("replicate n=%d s=%d failed: %s", n, s, exc)
        rec.update(ise=None, rho_hat=None, converged=False, capped=False, ok=False,
                   error=str(exc))
    return rec


def run_study(net: Network, spec, n_list: Sequence[int], S: int, config: FitConfig,
              seed: int, *, completed: Sequence[dict] = (), on_record: Callable | None = None,
              max_failure_rate: float = 0.05, network_id: str = "") -> StudyReport:
    """Replicated sample/fit/ISE study.

    Parameters
    ----------
    net : Network
    spec : IntensitySpec or BoundIntensity
    n_list : sequence of int
        Point counts to study.
    S : int
        Replicates per point count.
    config : FitConfig
    seed : int
        Master seed; replicate seeds come from :func:`derive_seed`.
    completed : sequence of dict, optional
        Records from an interrupted run; matching replicates are reused.
    on_record : callable, optional
        Called with every newly computed record (for checkpointing).

    Raises
    ------
    StudyError
        If more than ``max_failure_rate`` of the replicates for some ``n``
        fail.
    """
    bound = _as_bound(spec, net)
    setup = prepare(net, config)
    done = {(r["n"], r["replicate"]): r for r in completed}
    records = []
    for n in n_list:
        for s in range(S):
            rec = done.get((n, s))
            if rec is None:
                rec = _replicate(net, bound, setup, config, n, s, seed)
                if on_record is not None:
                    on_record(rec)
            records.append(rec)
        fails = sum(not r["ok"] for r in records if r["n"] == n)
        if fails > max_failure_rate * S:
            raise StudyError(f"{fails} of {S} replicates failed for n={n}")
    cfg = {
        "network_id": network_id or net.fingerprint[:16],
        "spec": bound.spec.label(),
        "normalizer": bound.normalizer,
        "n_list": list(n_list),
        "S": S,
        "seed": seed,
        "fit": config.to_dict(),
    }
    return StudyReport(cfg, records)


@dataclass
class SensitivityTable:
    deltas: list[float]
    hs: list[float]
    cells: dict  # (delta, h) -> (mean, sd) or None when h > delta

    def valid_means(self) -> list[float]:
        return [c[0] for c in self.cells.values() if c is not None]

    def write_csv(self, path, scale: float = 1000.0) -> None:
        """Rows per knot distance, columns per bin width, ``mean (sd)`` cells."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# mean (sd) of ISE, multiplied by {scale:g}\n")
            w = csv.writer(fh)
            w.writerow(["delta"] + [f"h={h:g}" for h in self.hs])
            for d in self.deltas:
                row = [f"{d:g}"]
                for h in self.hs:
                    cell = self.cells[(d, h)]
                    row.append("—" if cell is None else f"{cell[0] * scale:.2f} ({cell[1] * scale:.2f})")
                w.writerow(row)


def sensitivity_grid(net: Network, spec, n: int, delta_list: Sequence[float],
                     h_list: Sequence[float], S: int, seed: int, **fit_kwargs) -> SensitivityTable:
    """Mean and sd of the ISE over a grid of knot distances and bin widths.

    Cells with ``h > delta`` are left empty.  All cells reuse the same
    replicate seeds.
    """
    bound = _as_bound(spec, net)
    cells = {}
    for d in delta_list:
        for h in h_list:
            if h > d * (1 + 1e-12):
                cells[(d, h)] = None
                continue
            cfg = FitConfig(delta=d, h=h, **fit_kwargs)
            rep = run_study(net, bound, [n], S, cfg, seed)
            summ = rep.summary[n]
            cells[(d, h)] = (summ["mean_ise"], summ["sd_ise"])
    return SensitivityTable(list(delta_list), list(h_list), cells)
