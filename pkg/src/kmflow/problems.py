"""Canonical test instances with independently known fixed points.

Reference solutions never come from the flow integrator: they are closed
forms, eigen-decompositions, or plain proximal-gradient runs with a step size
(``1/L``) unrelated to the operator under test.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .exceptions import NumericalError, SpecError
from .operators import (
    MonotoneSpec,
    OperatorHandle,
    SmoothSpec,
    make_forward_backward,
    make_resolvent,
    rotation,
)
from .schedules import Schedule
from .validation import check_matrix, check_scalar, check_vector, frozen

FIXED_POINT_TOL = 1e-9
_REFERENCE_STEP_TOL = 1e-14
_REFERENCE_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class ProblemSpec:
    """An operator bundled with its constants and known fixed points.

    ``dist0_of(x)`` returns the exact distance from ``x`` to ``Fix T`` when
    that is computable, otherwise the attribute is ``None``.  ``fb_parts`` is
    ``(A, B, gamma)`` for forward-backward instances.
    """

    name: str
    operator: OperatorHandle
    constants: dict = field(default_factory=dict)
    known_fixed_points: List[np.ndarray] = field(default_factory=list)
    dist0_of: Optional[Callable[[np.ndarray], float]] = None
    fb_parts: Optional[Tuple[MonotoneSpec, SmoothSpec, float]] = None
    provenance: str = ""

    def __post_init__(self):
        for y in self.known_fixed_points:
            r = float(np.linalg.norm(self.operator(y) - y))
            if r > FIXED_POINT_TOL:
                raise SpecError(f"{self.name}: claimed fixed point {y} has residual {r:.3g}")

    @property
    def dim(self):
        return self.operator.dim


def _proximal_gradient(resolvent, grad, step, x0):
    x = x0
    for _ in range(_REFERENCE_MAX_ITER):
        x_new = resolvent(x - step * grad(x))
        if np.linalg.norm(x_new - x) <= _REFERENCE_STEP_TOL * (1.0 + np.linalg.norm(x)):
            return x_new
        x = x_new
    raise NumericalError("reference proximal-gradient solve did not converge")


def make_rotation(theta):
    """Planar rotation; ``Fix T = {0}`` and ``d(x0, Fix T) = ||x0||``."""
    theta = check_scalar(theta, "theta")
    if abs(np.sin(theta / 2.0)) < 1e-12:
        raise SpecError("rotation angle theta must not be a multiple of 2*pi (every point would be fixed)")
    return ProblemSpec(
        name=f"rotation({theta:.6g})",
        operator=rotation(theta),
        constants={"theta": theta},
        known_fixed_points=[np.zeros(2)],
        dist0_of=lambda x: float(np.linalg.norm(x)),
        provenance="closed form",
    )


def _unique_dist(x_star):
    x_star = frozen(x_star)
    return lambda x: float(np.linalg.norm(np.asarray(x, dtype=float) - x_star))


def make_bolte(c, q, b, mu):
    """Projected-gradient operator ``P_C (Id - mu grad phi)`` for ``phi = 1/2 x'Qx - b'x``.

    Requires ``0 < mu < 2/L`` with ``L`` the largest eigenvalue of ``Q``.
    The fixed points are the minimizers of ``phi`` over ``C``.
    """
    if not c.is_normal_cone:
        raise SpecError("the constraint set must be a box or a ball")
    smooth = SmoothSpec.affine_gradient(q, b)
    lip = 1.0 / smooth.beta
    mu = check_scalar(mu, "mu")
    if not 0.0 < mu < 2.0 / lip:
        raise SpecError(f"mu={mu:g} must lie in the open interval (0, 2/L) = (0, {2.0 / lip:g})")
    op, delta = make_forward_backward(c, smooth, mu)
    proj = make_resolvent(c, 1.0).fn
    x_star = _proximal_gradient(proj, smooth.gradient, smooth.beta, proj(np.zeros(smooth.dim)))
    unique = np.linalg.eigvalsh(smooth.hessian)[0] > 1e-10
    return ProblemSpec(
        name=f"bolte[{c.kind}]",
        operator=op,
        constants={"mu": mu, "gamma": mu, "beta": smooth.beta, "delta": delta, "alpha": 1.0 / delta},
        known_fixed_points=[x_star],
        dist0_of=_unique_dist(x_star) if unique else None,
        fb_parts=(c, smooth, mu),
        provenance="projected gradient with step 1/L",
    )


def make_lasso(a, b, reg, gamma, known_solutions=None):
    """Forward-backward operator for ``1/2 ||Ax - b||^2 + reg ||x||_1``.

    ``known_solutions`` may list closed-form minimizers (validated against
    the operator); otherwise one is computed by proximal gradient with step
    ``1/L``.  ``dist0_of`` is set only when ``A`` has full column rank.
    """
    smooth = SmoothSpec.least_squares(a, b)
    reg = check_scalar(reg, "reg", low=0.0)
    gamma = check_scalar(gamma, "gamma")
    beta = smooth.beta
    if not 0.0 < gamma < 2.0 * beta:
        raise SpecError(f"gamma={gamma:g} must lie in the open interval (0, 2*beta) = (0, {2.0 * beta:g})")
    l1 = MonotoneSpec.l1(smooth.dim, reg)
    op, delta = make_forward_backward(l1, smooth, gamma)
    if known_solutions:
        sols = [check_vector(s, dim=smooth.dim, name="known solution") for s in known_solutions]
        provenance = "closed form"
    else:
        prox = make_resolvent(l1, beta).fn
        sols = [_proximal_gradient(prox, smooth.gradient, beta, np.zeros(smooth.dim))]
        provenance = "proximal gradient with step 1/L"
    unique = np.linalg.eigvalsh(smooth.hessian)[0] > 1e-10
    return ProblemSpec(
        name="lasso",
        operator=op,
        constants={"gamma": gamma, "beta": beta, "delta": delta, "alpha": 1.0 / delta, "reg": reg},
        known_fixed_points=sols,
        dist0_of=_unique_dist(sols[0]) if unique else None,
        fb_parts=(l1, smooth, gamma),
        provenance=provenance,
    )


def make_quadratic(q, gamma):
    """Gradient-step operator ``Id - gamma Q`` (forward-backward with ``A = 0``).

    ``Fix T = ker Q`` so the distance to it is the norm of the component in
    the range of ``Q``, read off the eigen-decomposition.
    """
    q = check_matrix(q, square=True, name="Q")
    smooth = SmoothSpec.affine_gradient(q)
    gamma = check_scalar(gamma, "gamma")
    if not 0.0 < gamma < 2.0 * smooth.beta:
        raise SpecError(f"gamma={gamma:g} must lie in the open interval (0, 2*beta) = (0, {2.0 * smooth.beta:g})")
    op, delta = make_forward_backward(MonotoneSpec.zero(q.shape[0]), smooth, gamma)
    eig, vec = np.linalg.eigh(smooth.hessian)
    rng = frozen(vec[:, eig > 1e-10])
    return ProblemSpec(
        name="quadratic",
        operator=op,
        constants={"gamma": gamma, "beta": smooth.beta, "delta": delta, "alpha": 1.0 / delta},
        known_fixed_points=[np.zeros(q.shape[0])],
        dist0_of=lambda x: float(np.linalg.norm(rng.T @ np.asarray(x, dtype=float))),
        fb_parts=(MonotoneSpec.zero(q.shape[0]), smooth, gamma),
        provenance="closed form (kernel of Q)",
    )


def rank_deficient_lasso(gamma=0.25):
    """Lasso with ``A = [[1, 1], [1, 1]]``, ``b = (3, 3)``, ``reg = 1``.

    Only ``s = x1 + x2`` enters the smooth term; for ``x >= 0`` the objective
    is ``(s - 3)^2 + s + const``, minimized at ``s = 2.5``, so every point of
    the segment ``{(u, 2.5 - u): 0 <= u <= 2.5}`` is a minimizer.
    """
    return make_lasso([[1.0, 1.0], [1.0, 1.0]], [3.0, 3.0], 1.0, gamma,
                      known_solutions=[[2.5, 0.0], [0.0, 2.5], [1.25, 1.25]])


def standard_problems():
    """The shipped problem set used by the Lyapunov suite, as ``(problem, x0)`` pairs."""
    skewed_q = np.array([[2.5, 1.5], [1.5, 2.5]])  # eigenvalues 1 and 4
    return [
        (make_rotation(np.pi / 2), np.array([1.0, 0.0])),
        (make_rotation(np.pi), np.array([1.0, -0.5])),
        (make_rotation(2.0), np.array([-0.3, 2.0])),
        (make_bolte(MonotoneSpec.box([0.0, 0.0], [1.0, 1.0]), np.eye(2), [2.0, 0.5], 1.0),
         np.array([-1.0, 3.0])),
        (make_bolte(MonotoneSpec.ball([0.0, 0.0], 1.0), np.eye(2), [0.0, 0.0], 1.0), np.array([2.0, -1.0])),
        (make_bolte(MonotoneSpec.box([-1.0], [1.0]), [[1.0]], [5.0], 0.5), np.array([-3.0])),
        (make_lasso(np.eye(2), [3.0, 0.2], 1.0, 1.0), np.array([0.0, 0.0])),
        (rank_deficient_lasso(), np.array([-1.0, 2.0])),
        (make_quadratic(skewed_q, 0.25), np.array([1.0, 1.0])),
    ]


def standard_schedules():
    """Relaxation schedules with values in ``[0, 1]`` shipped with the test suite."""
    return {
        "constant_1": Schedule.constant(1.0),
        "constant_0.5": Schedule.constant(0.5),
        "hyperbolic_1": Schedule.hyperbolic(1.0),
        "piecewise_1_0.5": Schedule.piecewise([2.0], [1.0, 0.5]),
    }
