"""Continuous-time Krasnosel'skii-Mann dynamics ``x' = lambda(t) (T x - x)``.

Simulate the flow for nonexpansive operators, run the discrete KM and
forward-backward iterations, and check convergence diagnostics on the
recorded trajectories.
"""

from .analysis import (
    fb_diagnostics,
    little_o_check,
    lyapunov_report,
    rate_bound_check,
    slope_fit,
)
from .discrete import IterateLog, euler_equals_km, fb_iterate, km_iterate
from .estimators import FixedPointFlow, FlowLasso, KrasnoselskiiMann
from .exceptions import (
    DimensionError,
    DivergenceError,
    DomainError,
    InsufficientData,
    KMFlowError,
    NumericalError,
    PreconditionError,
    RangeExceeded,
    SpecError,
    UnsupportedProxError,
)
from .flow import FlowConfig, Trajectory, derivative, integrate
from .operators import (
    MonotoneSpec,
    OperatorHandle,
    Regularity,
    SmoothSpec,
    certify_cocoercive,
    certify_nonexpansive,
    identity,
    make_averaged,
    make_douglas_rachford,
    make_forward_backward,
    make_projection,
    make_prox,
    make_resolvent,
    rotation,
)
from .problems import ProblemSpec, make_bolte, make_lasso, make_quadratic, make_rotation
from .rescale import forward_time, inverse_time, rescaled_equivalence
from .schedules import Schedule, check_conditions

__version__ = "0.1.0"

__all__ = [
    "certify_cocoercive",
    "certify_nonexpansive",
    "check_conditions",
    "derivative",
    "DimensionError",
    "DivergenceError",
    "DomainError",
    "euler_equals_km",
    "fb_diagnostics",
    "fb_iterate",
    "FixedPointFlow",
    "FlowConfig",
    "FlowLasso",
    "forward_time",
    "identity",
    "InsufficientData",
    "integrate",
    "inverse_time",
    "IterateLog",
    "km_iterate",
    "KMFlowError",
    "KrasnoselskiiMann",
    "little_o_check",
    "lyapunov_report",
    "make_averaged",
    "make_bolte",
    "make_douglas_rachford",
    "make_forward_backward",
    "make_lasso",
    "make_projection",
    "make_prox",
    "make_quadratic",
    "make_resolvent",
    "make_rotation",
    "MonotoneSpec",
    "NumericalError",
    "OperatorHandle",
    "PreconditionError",
    "ProblemSpec",
    "RangeExceeded",
    "rate_bound_check",
    "Regularity",
    "rescaled_equivalence",
    "rotation",
    "Schedule",
    "slope_fit",
    "SmoothSpec",
    "SpecError",
    "Trajectory",
    "UnsupportedProxError",
]
