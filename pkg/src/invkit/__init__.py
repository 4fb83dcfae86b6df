"""invkit: controlled invariant sets for switched systems by interval methods.

Computes outer and inner approximations of maximal controlled invariant sets
of discrete-time switched nonlinear systems with interval branch-and-prune,
extracts partition-based invariance controllers from inner approximations,
and simulates the closed loop.
"""

from .errors import (
    CertificationFailure,
    ConfigError,
    ConformanceBreach,
    DegenerateBox,
    DomainError,
    EmptyOperand,
    EmptyResult,
    ExprSyntaxError,
    InfeasibleStart,
    InvkitError,
    IterationBudgetExceeded,
    MisalignedBox,
    NegativeRadius,
    NonDifferentiable,
    NonIntegerExponent,
    NotConverging,
    OriginOutside,
    UnknownVariable,
)
from .interval import Box, Interval, RoundingPolicy
from .paving import ClassifiedPaving, ModeSet, Region, region_from_boxes
from .system import (
    InclusionStrategy,
    LipschitzEstimate,
    Mode,
    SwitchedSystem,
    discretize_euler,
    discretize_linear_affine,
    estimate_rho1,
    include,
    lyapunov_margin,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Interval",
    "RoundingPolicy",
    "Region",
    "region_from_boxes",
    "ClassifiedPaving",
    "ModeSet",
    "Mode",
    "SwitchedSystem",
    "InclusionStrategy",
    "LipschitzEstimate",
    "include",
    "estimate_rho1",
    "discretize_linear_affine",
    "discretize_euler",
    "lyapunov_margin",
    "InvkitError",
    "EmptyOperand",
    "DomainError",
    "DegenerateBox",
    "NegativeRadius",
    "MisalignedBox",
    "ExprSyntaxError",
    "UnknownVariable",
    "NonIntegerExponent",
    "NonDifferentiable",
    "NotConverging",
    "OriginOutside",
    "IterationBudgetExceeded",
    "CertificationFailure",
    "EmptyResult",
    "InfeasibleStart",
    "ConformanceBreach",
    "ConfigError",
]
