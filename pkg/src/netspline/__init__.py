"""Penalized spline intensity estimation for point patterns on networks."""

from .basis import KnotLayout, NetworkBasis, build_basis, design_matrix, evaluate_basis, knot_spacing
from .exceptions import (
    ContractError,
    ConvergenceError,
    FormatError,
    NetworkError,
    SnapError,
    StudyError,
)
from .model import (
    BinLayout,
    BinnedCounts,
    FitConfig,
    FitResult,
    bin_counts,
    bin_layout,
    evaluate_density,
    evaluate_intensity,
    fellner_schall_step,
    fit_intensity,
    intensity_ratio,
    newton_fit,
    penalized_loglik,
)
from .network import (
    Edge,
    Network,
    NetworkPoint,
    arc_length,
    build_network,
    embed,
    network_distance,
    snap,
)
from .penalty import PenaltySet, build_penalty
from .sim import IntensitySpec, StudyReport, ise, run_study, sample_points, sensitivity_grid

__version__ = "0.1.0"
