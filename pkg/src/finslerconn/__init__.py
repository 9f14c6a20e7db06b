"""Numerical Finsler geometry: jets of F, the general-type connection family,
curvature, geodesic profiles and metric classification."""

__version__ = "0.1.0"

from .connections import (
    ConnectionCoefficients,
    ConnectionParams,
    christoffel,
    delta_derivative,
    formal_christoffel,
    h_cov_deriv,
    iterated_cartan,
    nonlinear_connection,
    v_cov_deriv,
    vertical_coefficients,
)
from .curvature import (
    CurvatureBundle,
    curvature,
    flag_curvature,
    bianchi_residuals,
    reduced_hv,
    symmetry_residuals,
)
from .diffengine import ScalarField, TangentPoint, fd_partial, partial
from .geodesics import fit_solution_form, integrate_geodesic, profile_cartan
from .classify import classify_metric, coincidence_tests, theorem_suite
from .metrics import (
    LocalGeometry,
    MetricInstance,
    TensorBlock,
    cartan_tensor,
    eval_F,
    fundamental_tensor,
    inverse_metric,
    make_metric,
    metric_from_json,
    normalized_cartan,
    unit_ell,
    zoo,
)

__all__ = [name for name in dir() if not name.startswith("_")]
