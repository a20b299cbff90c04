"""Operator zoo: projections, proximal maps, resolvents and splitting operators.

Every constructor returns an :class:`OperatorHandle`, an immutable callable
that carries its dimension and a declared regularity class.  Declared
regularity can be spot-checked with :func:`certify_nonexpansive` and
:func:`certify_cocoercive`.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .exceptions import DimensionError, NumericalError, SpecError, UnsupportedProxError
from .validation import check_matrix, check_scalar, check_vector, frozen

_MONOTONE_EIG_FLOOR = -1e-10
_LIPSCHITZ_FLOOR = 1e-12


@dataclass(frozen=True)
class Regularity:
    """Declared regularity class of an operator.

    ``kind`` is one of ``"nonexpansive"``, ``"averaged"`` (``constant`` is the
    averagedness constant in (0, 1)), ``"cocoercive"`` (``constant`` is beta)
    or ``"lipschitz"`` (``constant`` is L).
    """

    kind: str
    constant: Optional[float] = None

    @classmethod
    def nonexpansive(cls):
        return cls("nonexpansive")

    @classmethod
    def averaged(cls, alpha):
        return cls("averaged", float(alpha))

    @classmethod
    def cocoercive(cls, beta):
        return cls("cocoercive", float(beta))

    @classmethod
    def lipschitz(cls, lip):
        return cls("lipschitz", float(lip))

    @property
    def is_nonexpansive(self):
        if self.kind in ("nonexpansive", "averaged"):
            return True
        if self.kind == "lipschitz":
            return self.constant <= 1.0
        # beta-cocoercive maps are (1/beta)-Lipschitz
        return self.constant >= 1.0

    def __str__(self):
        if self.constant is None:
            return self.kind
        return f"{self.kind}({self.constant:g})"


@dataclass(frozen=True)
class OperatorHandle:
    """A single-valued map R^dim -> R^dim with declared regularity."""

    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dim: int
    regularity: Regularity
    label: str = "T"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"{self.label} acts on R^{self.dim}, got shape {x.shape}")
        return self.fn(x)

    def residual(self, x):
        """Fixed-point residual vector ``T(x) - x``."""
        return self(x) - np.asarray(x, dtype=float)


# --------------------------------------------------------------------------- specs


@dataclass(frozen=True)
class MonotoneSpec:
    """Closed-form maximally monotone operator ``A``.

    Use the classmethod constructors; ``kind`` is one of ``"linear"``,
    ``"l1"`` (subdifferential of ``weight * ||.||_1``), ``"box"``, ``"ball"``
    (normal cones) or ``"zero"``.
    """

    kind: str
    dim: int
    matrix: Optional[np.ndarray] = field(default=None, repr=False)
    weight: float = 0.0
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = 0.0

    @classmethod
    def zero(cls, dim):
        return cls("zero", int(dim))

    @classmethod
    def linear(cls, matrix):
        m = check_matrix(matrix, square=True, name="linear operator matrix")
        sym = 0.5 * (m + m.T)
        floor = float(np.min(np.linalg.eigvalsh(sym)))
        if floor < _MONOTONE_EIG_FLOOR:
            raise SpecError(f"linear operator is not monotone: M + M^T has eigenvalue {2 * floor:.3g}")
        return cls("linear", m.shape[0], matrix=frozen(m))

    @classmethod
    def l1(cls, dim, weight=1.0):
        weight = check_scalar(weight, "l1 weight", low=0.0)
        return cls("l1", int(dim), weight=weight)

    @classmethod
    def box(cls, lo, hi):
        lo = check_vector(lo, name="box lower bound")
        hi = check_vector(hi, dim=lo.size, name="box upper bound")
        if np.any(lo > hi):
            raise SpecError("box lower bound exceeds upper bound")
        return cls("box", lo.size, lo=frozen(lo), hi=frozen(hi))

    @classmethod
    def ball(cls, center, radius):
        center = check_vector(center, name="ball center")
        radius = check_scalar(radius, "ball radius", low=0.0, low_open=True)
        return cls("ball", center.size, center=frozen(center), radius=radius)

    @property
    def is_normal_cone(self):
        return self.kind in ("box", "ball")


@dataclass(frozen=True)
class SmoothSpec:
    """Gradient of a smooth convex quadratic, a cocoercive operator ``B``.

    ``affine_gradient(Q, b)`` is the gradient of ``1/2 x'Qx - b'x``;
    ``least_squares(A, b)`` the gradient of ``1/2 ||Ax - b||^2``.  ``beta`` is
    ``1/L`` with ``L`` the largest eigenvalue of the Hessian (floored at 1e-12).
    """

    kind: str
    dim: int
    hessian: np.ndarray = field(repr=False)
    linear_term: np.ndarray = field(repr=False)
    beta: float
    design: Optional[np.ndarray] = field(default=None, repr=False)
    target: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def affine_gradient(cls, q, b=None):
        q = check_matrix(q, square=True, name="Q")
        if not np.allclose(q, q.T, atol=1e-12):
            raise SpecError("Q must be symmetric")
        eig = np.linalg.eigvalsh(q)
        if eig[0] < _MONOTONE_EIG_FLOOR:
            raise SpecError(f"Q must be positive semidefinite, smallest eigenvalue {eig[0]:.3g}")
        b = np.zeros(q.shape[0]) if b is None else check_vector(b, dim=q.shape[0], name="b")
        lip = max(float(eig[-1]), _LIPSCHITZ_FLOOR)
        return cls("affine_gradient", q.shape[0], frozen(q), frozen(b), 1.0 / lip)

    @classmethod
    def least_squares(cls, a, b):
        a = check_matrix(a, name="design matrix")
        b = check_vector(b, dim=a.shape[0], name="target vector")
        q = a.T @ a
        lip = max(float(np.linalg.eigvalsh(q)[-1]), _LIPSCHITZ_FLOOR)
        return cls("least_squares", a.shape[1], frozen(q), frozen(a.T @ b), 1.0 / lip,
                   design=frozen(a), target=frozen(b))

    def gradient(self, x):
        if self.design is not None:
            return self.design.T @ (self.design @ x - self.target)
        return self.hessian @ x - self.linear_term

    def value(self, x):
        if self.design is not None:
            r = self.design @ x - self.target
            return 0.5 * float(r @ r)
        return 0.5 * float(x @ self.hessian @ x) - float(self.linear_term @ x)


# --------------------------------------------------------------------------- basic maps


def identity(dim):
    return OperatorHandle(lambda x: x.copy(), int(dim), Regularity.nonexpansive(), "Id")


def rotation(theta):
    """Planar rotation by `theta`, an isometry of R^2."""
    c, s = np.cos(theta), np.sin(theta)
    # exact entries at multiples of pi/2, so rotation(pi) is exactly -Id
    c, s = (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)
    m = frozen([[c, -s], [s, c]])
    return OperatorHandle(lambda x: m @ x, 2, Regularity.nonexpansive(), f"rotation({theta:.6g})")


def linear_map(matrix, label=None):
    """Matrix operator; declared nonexpansive iff its spectral norm is at most 1."""
    m = frozen(check_matrix(matrix, square=True))
    lip = float(np.linalg.norm(m, 2))
    reg = Regularity.nonexpansive() if lip <= 1.0 + 1e-12 else Regularity.lipschitz(lip)
    return OperatorHandle(lambda x: m @ x, m.shape[0], reg, label or "linear")


def make_gradient(smooth):
    """``B = grad phi`` as an operator handle, declared ``beta``-cocoercive."""
    return OperatorHandle(smooth.gradient, smooth.dim, Regularity.cocoercive(smooth.beta),
                          f"grad[{smooth.kind}]")


def identity_minus(op):
    """``Id - T``; half-cocoercive whenever ``T`` is nonexpansive."""
    if op.regularity.is_nonexpansive:
        reg = Regularity.cocoercive(0.5)
    else:
        reg = Regularity.lipschitz(1.0 + (op.regularity.constant or 1.0))
    return OperatorHandle(lambda x: x - op.fn(x), op.dim, reg, f"Id-{op.label}")


def _soft_threshold(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _projector(spec):
    if spec.kind == "box":
        lo, hi = spec.lo, spec.hi
        return lambda x: np.clip(x, lo, hi)
    if spec.kind == "ball":
        center, radius = spec.center, spec.radius

        def project(x):
            d = x - center
            n = np.linalg.norm(d)
            # covers x == center as well
            if n <= radius:
                return x.copy()
            return center + d * (radius / n)

        return project
    raise SpecError(f"projection needs a box or ball spec, got {spec.kind!r}")


def make_projection(spec):
    """Metric projection onto the box or ball described by `spec`."""
    fn = _projector(spec)
    return OperatorHandle(fn, spec.dim, Regularity.averaged(0.5), f"P[{spec.kind}]")


def _linear_solver(matrix, scale):
    lhs = np.eye(matrix.shape[0]) + scale * matrix
    if np.linalg.cond(lhs) > 1e14:
        raise NumericalError("I + gamma*M is numerically singular")
    factor = linalg.lu_factor(lhs)
    return lambda x: linalg.lu_solve(factor, x)


def make_prox(f, mu):
    """``prox_{mu f}`` for closed-form cases.

    Supported: ``l1`` (soft thresholding), ``box``/``ball`` (indicator, i.e.
    projection), ``zero`` (identity) and ``linear`` with a symmetric matrix,
    interpreted as ``f(x) = 1/2 x'Mx``.
    """
    mu = check_scalar(mu, "mu", low=0.0, low_open=True)
    if f.kind == "zero":
        fn = lambda x: x.copy()  # noqa: E731
    elif f.kind == "l1":
        t = mu * f.weight
        fn = lambda x: _soft_threshold(x, t)  # noqa: E731
    elif f.is_normal_cone:
        fn = _projector(f)
    elif f.kind == "linear":
        if not np.allclose(f.matrix, f.matrix.T, atol=1e-12):
            raise UnsupportedProxError("non-symmetric linear operator is not a gradient; no prox")
        fn = _linear_solver(f.matrix, mu)
    else:
        raise UnsupportedProxError(f"no closed-form prox for {f.kind!r}")
    return OperatorHandle(fn, f.dim, Regularity.averaged(0.5), f"prox[{f.kind}]")


def make_resolvent(a, gamma):
    """Resolvent ``J_{gamma A} = (Id + gamma A)^{-1}``."""
    gamma = check_scalar(gamma, "gamma", low=0.0, low_open=True)
    if a.kind == "linear":
        fn = _linear_solver(a.matrix, gamma)
    elif a.kind == "zero":
        fn = lambda x: x.copy()  # noqa: E731
    elif a.kind == "l1":
        t = gamma * a.weight
        fn = lambda x: _soft_threshold(x, t)  # noqa: E731
    elif a.is_normal_cone:
        fn = _projector(a)
    else:
        raise SpecError(f"unknown monotone operator kind {a.kind!r}")
    return OperatorHandle(fn, a.dim, Regularity.averaged(0.5), f"J[{gamma:g}*{a.kind}]")


def make_averaged(op, alpha):
    """``R = (1 - alpha) Id + alpha T`` for nonexpansive `op`."""
    alpha = check_scalar(alpha, "alpha", low=0.0, high=1.0, low_open=True, high_open=True)
    if not op.regularity.is_nonexpansive:
        raise SpecError(f"{op.label} is declared {op.regularity}, not nonexpansive")
    fn = op.fn
    return OperatorHandle(lambda x: (1.0 - alpha) * x + alpha * fn(x), op.dim,
                          Regularity.averaged(alpha), f"avg[{alpha:g}]({op.label})")


def fb_relaxation_bound(beta, gamma):
    """Upper relaxation bound ``min(1, beta/gamma) + 1/2`` for forward-backward."""
    return min(1.0, beta / gamma) + 0.5


def make_forward_backward(a, b, gamma):
    """Forward-backward operator ``T = J_{gamma A} o (Id - gamma B)``.

    Returns ``(T, delta)`` with ``delta = min(1, beta/gamma) + 1/2``; ``T`` is
    ``1/delta``-averaged and its fixed points are the zeros of ``A + B``.
    """
    if a.dim != b.dim:
        raise DimensionError(f"A acts on R^{a.dim}, B on R^{b.dim}")
    gamma = check_scalar(gamma, "gamma", low=0.0, high=2.0 * b.beta, low_open=True, high_open=True)
    delta = fb_relaxation_bound(b.beta, gamma)
    resolvent = make_resolvent(a, gamma).fn
    grad = b.gradient
    op = OperatorHandle(lambda x: resolvent(x - gamma * grad(x)), a.dim,
                        Regularity.averaged(1.0 / delta), f"FB[{a.kind},{b.kind},{gamma:g}]")
    return op, delta


def make_douglas_rachford(a, b2, gamma):
    """Douglas-Rachford operator ``1/2 (Id + R_A o R_B)`` with reflected resolvents.

    ``R_C = 2 J_{gamma C} - Id``.  The shadow ``J_{gamma B}(z)`` of a fixed
    point ``z`` is a zero of ``A + B``.
    """
    if a.dim != b2.dim:
        raise DimensionError(f"A acts on R^{a.dim}, B on R^{b2.dim}")
    ja = make_resolvent(a, gamma).fn
    jb = make_resolvent(b2, gamma).fn

    def dr(x):
        rb = 2.0 * jb(x) - x
        ra = 2.0 * ja(rb) - rb
        return 0.5 * (x + ra)

    return OperatorHandle(dr, a.dim, Regularity.averaged(0.5), f"DR[{a.kind},{b2.kind},{gamma:g}]")


# --------------------------------------------------------------------------- certification


@dataclass(frozen=True)
class CertReport:
    """Outcome of a sampled regularity check.

    ``worst`` is the largest excess (nonexpansiveness) or the smallest margin
    (cocoercivity) seen over the sampled pairs.
    """

    property: str
    passed: bool
    worst: float
    worst_pair: int
    trials: int
    seed: int
    box_radius: float


def _sample_pairs(dim, trials, seed, box_radius):
    if trials < 1:
        raise SpecError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-box_radius, box_radius, size=(trials, dim))
    ys = rng.uniform(-box_radius, box_radius, size=(trials, dim))
    return xs, ys


def certify_nonexpansive(op, trials=1000, seed=0, box_radius=10.0):
    """Sample pairs and check ``||Tx - Ty|| <= ||x - y||`` up to 1e-9 (1 + ||x - y||)."""
    xs, ys = _sample_pairs(op.dim, trials, seed, box_radius)
    excess = np.empty(trials)
    ok = True
    for i, (x, y) in enumerate(zip(xs, ys)):
        d = np.linalg.norm(x - y)
        excess[i] = np.linalg.norm(op(x) - op(y)) - d
        ok &= excess[i] <= 1e-9 * (1.0 + d)
    k = int(np.argmax(excess))
    return CertReport("nonexpansive", bool(ok), float(excess[k]), k, trials, seed, box_radius)


def certify_cocoercive(op, beta, trials=1000, seed=0, box_radius=10.0):
    """Sample pairs and check ``<x-y, Bx-By> >= beta ||Bx-By||^2`` up to 1e-9 (1 + ||x-y||^2)."""
    beta = check_scalar(beta, "beta", low=0.0, low_open=True)
    xs, ys = _sample_pairs(op.dim, trials, seed, box_radius)
    margin = np.empty(trials)
    ok = True
    for i, (x, y) in enumerate(zip(xs, ys)):
        d = x - y
        g = op(x) - op(y)
        margin[i] = d @ g - beta * (g @ g)
        ok &= margin[i] >= -1e-9 * (1.0 + d @ d)
    k = int(np.argmin(margin))
    return CertReport(f"cocoercive({beta:g})", bool(ok), float(margin[k]), k, trials, seed, box_radius)
