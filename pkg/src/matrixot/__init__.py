"""Optimal mass transport between Hermitian matrix-valued densities.

Mass moves across a frequency grid while a second penalty charges for
rotating cross-channel orientation; the solver minimizes both jointly
over tensor-product transport plans.
"""

from .full import (
    FullSolveResult,
    FullTransportPlan,
    GroundCost,
    MatrixDensity,
    NaiveFeasibilityResult,
    SolverConfig,
    lift_plan,
    naive_feasibility,
    product_plan,
    solve_full,
    transport_cost,
)
from .geodesic import GeodesicPath, interpolate, segment_costs
from .hermitian import (
    BigMatrix,
    HermitianMatrix,
    frob_dist_sq,
    kron,
    partial_trace_0,
    partial_trace_1,
    psd_project,
)
from .properties import (
    MonotoneCheck,
    RearrangementQuadruple,
    SupportSet,
    check_lambda_monotone,
    rearrange_quadruple,
    support_set,
)
from .restricted import (
    RestrictedPlan,
    RestrictedResult,
    RotationalCost,
    d2lambda,
    rotational_cost,
)
from .scalar import (
    DualCertificate,
    ScalarDensity,
    ScalarPlan,
    discrete_ot_lp,
    displacement_geodesic,
    monotone_map,
    quantile,
    rebin,
    w2_closed_form,
)
from .spectra import (
    RationalSpectrumSpec,
    build_paper_pair,
    default_grid,
    eval_ar_magnitude,
    normalize,
)

__version__ = "0.1.0"

__all__ = [
    "BigMatrix",
    "DualCertificate",
    "FullSolveResult",
    "FullTransportPlan",
    "GeodesicPath",
    "GroundCost",
    "HermitianMatrix",
    "MatrixDensity",
    "MonotoneCheck",
    "NaiveFeasibilityResult",
    "RationalSpectrumSpec",
    "RearrangementQuadruple",
    "RestrictedPlan",
    "RestrictedResult",
    "RotationalCost",
    "ScalarDensity",
    "ScalarPlan",
    "SolverConfig",
    "SupportSet",
    "build_paper_pair",
    "check_lambda_monotone",
    "d2lambda",
    "default_grid",
    "discrete_ot_lp",
    "displacement_geodesic",
    "eval_ar_magnitude",
    "frob_dist_sq",
    "interpolate",
    "kron",
    "lift_plan",
    "monotone_map",
    "naive_feasibility",
    "normalize",
    "partial_trace_0",
    "partial_trace_1",
    "product_plan",
    "psd_project",
    "quantile",
    "rearrange_quadruple",
    "rebin",
    "rotational_cost",
    "segment_costs",
    "solve_full",
    "support_set",
    "transport_cost",
    "w2_closed_form",
]
