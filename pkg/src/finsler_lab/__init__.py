"""Numerical Finsler geometry: sprays, curvature, affine vector fields and
integration over the unit sphere bundle."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDensity,
    FinslerError,
    HorizontalLeak,
    LeftChart,
    NonPositiveNorm,
    NotPositiveDefinite,
    ZeroVector,
)
from .metric import (
    ChartDomain,
    CustomAnalytic,
    EuclideanQuadratic,
    FiberPoint,
    MetricSpec,
    Randers,
    Riemannian,
    eval_F,
    fundamental_tensor,
    random_fiber_points,
    stereographic_sphere,
    validate_metric,
)
from .spray import (
    CurvatureBundle,
    VectorFieldDef,
    berwald_coefficients,
    covariant_section_derivative,
    curvature_bundle,
    dynamical_derivative_scalar,
    metric_compatibility_check,
    riemann_curvature,
    second_dynamical_derivative,
    spray_coefficients,
)

__all__ = [
    "ChartDomain",
    "ConfigError",
    "CurvatureBundle",
    "CustomAnalytic",
    "DegenerateDensity",
    "EuclideanQuadratic",
    "FiberPoint",
    "FinslerError",
    "HorizontalLeak",
    "LeftChart",
    "MetricSpec",
    "NonPositiveNorm",
    "NotPositiveDefinite",
    "Randers",
    "Riemannian",
    "VectorFieldDef",
    "ZeroVector",
    "berwald_coefficients",
    "covariant_section_derivative",
    "curvature_bundle",
    "dynamical_derivative_scalar",
    "eval_F",
    "fundamental_tensor",
    "metric_compatibility_check",
    "random_fiber_points",
    "riemann_curvature",
    "second_dynamical_derivative",
    "spray_coefficients",
    "stereographic_sphere",
    "validate_metric",
]
