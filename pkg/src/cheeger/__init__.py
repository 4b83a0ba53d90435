"""Cheeger deformations of group-invariant metrics: curvature, zero planes and oracles."""

from .algebra import (
    AlgebraError,
    LieAlgebra,
    MetricOperator,
    Subalgebra,
    SubalgebraChain,
    builtin,
    chain_blocks,
    check_bi_invariance,
    make_chain,
    named_subalgebra,
    subalgebra,
)
from .engine import (
    CurvatureBreakdown,
    DeformationError,
    DeformationParam,
    PlaneClass,
    PlaneTag,
    chain_metric,
    classify_zero_plane,
    derivative_probe,
    gs_curvature,
    kappa_c,
    nonneg_scan,
    orbit_tensor_t,
    wedge_sq,
    z_term,
    z_term_sampled,
)
from .geometry import GeometryError, GroupBackend, SphereBackend, SpherePoint, point_frame

__version__ = "0.1.0"

__all__ = [
    "AlgebraError", "LieAlgebra", "MetricOperator", "Subalgebra", "SubalgebraChain",
    "builtin", "chain_blocks", "check_bi_invariance", "make_chain", "named_subalgebra",
    "subalgebra", "CurvatureBreakdown", "DeformationError", "DeformationParam",
    "PlaneClass", "PlaneTag", "chain_metric", "classify_zero_plane", "derivative_probe",
    "gs_curvature", "kappa_c", "nonneg_scan", "orbit_tensor_t", "wedge_sq", "z_term",
    "z_term_sampled", "GeometryError", "GroupBackend", "SphereBackend", "SpherePoint",
    "point_frame",
]
