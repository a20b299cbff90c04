"""Numerical integration of ``x'(t) = lambda(t) (T(x(t)) - x(t))``.

Three explicit methods are available: adaptive Dormand-Prince 5(4)
(``"rk45"``, the default), classical RK4 and forward Euler.  States are only
kept at the requested sample times; the adaptive method fills them with its
fourth-order continuous extension inside accepted steps and never steps
across a discontinuity of the relaxation schedule.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError, DivergenceError, NumericalError, SpecError
from .validation import check_scalar, check_vector

log = logging.getLogger(__name__)

METHODS = ("rk45", "rk4", "euler")

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# fourth-order continuous extension: x(t + th h) = x + h sum_j k_j (P[j] @ (th, th^2, th^3, th^4))
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_DIVERGENCE_FACTOR = 1e12
_UNDERFLOW_FACTOR = 1e-14


@dataclass(frozen=True)
class FlowConfig:
    """Integration settings.

    Either pass explicit ``sample_times`` (sorted, starting at 0, ending no
    later than ``t_end``) or ``n_samples`` for a uniform grid on ``[0, t_end]``.
    ``h`` is required for the fixed-step methods.
    """

    t_end: float
    sample_times: Optional[np.ndarray] = None
    n_samples: int = 101
    method: str = "rk45"
    h: Optional[float] = None
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    record_derivative: bool = False

    def __post_init__(self):
        t_end = check_scalar(self.t_end, "t_end", low=0.0, low_open=True)
        object.__setattr__(self, "t_end", t_end)
        if self.method not in METHODS:
            raise SpecError(f"unknown integration method {self.method!r}; choose from {METHODS}")
        if self.sample_times is None:
            if int(self.n_samples) < 2:
                raise SpecError("n_samples must be at least 2")
            times = np.linspace(0.0, t_end, int(self.n_samples))
        else:
            times = check_vector(self.sample_times, name="sample_times")
            if times[0] != 0.0:
                raise SpecError("sample_times must start at 0")
            if np.any(np.diff(times) <= 0.0):
                raise SpecError("sample_times must be strictly increasing")
            if times[-1] > t_end:
                raise SpecError("sample_times must lie within [0, t_end]")
        times = times.copy()
        times.setflags(write=False)
        object.__setattr__(self, "sample_times", times)
        object.__setattr__(self, "n_samples", times.size)
        if self.method == "rk45":
            check_scalar(self.abs_tol, "abs_tol", low=0.0, low_open=True)
            check_scalar(self.rel_tol, "rel_tol", low=0.0, low_open=True)
        else:
            if self.h is None:
                raise SpecError(f"method {self.method!r} needs a fixed step h")
            check_scalar(self.h, "h", low=0.0, low_open=True)

    def replace(self, **changes):
        params = dict(t_end=self.t_end, sample_times=self.sample_times, method=self.method, h=self.h,
                      abs_tol=self.abs_tol, rel_tol=self.rel_tol,
                      record_derivative=self.record_derivative)
        if "t_end" in changes and "sample_times" not in changes:
            params["sample_times"] = None
            params["n_samples"] = self.n_samples
        params.update(changes)
        return FlowConfig(**params)


@dataclass
class Trajectory:
    """Sampled solution with per-sample diagnostics.

    ``residuals[i] = ||T(x_i) - x_i||`` and ``speeds[i] = lambda(t_i) * residuals[i]``
    (the norm of the velocity).
    """

    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    speeds: np.ndarray
    lambdas: np.ndarray
    derivatives: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def x0(self):
        return self.states[0]

    @property
    def final_state(self):
        return self.states[-1]

    def distances_to(self, y):
        y = check_vector(y, dim=self.dim, name="y")
        return np.linalg.norm(self.states - y, axis=1)


def derivative(op, s, t, x):
    """Right-hand side ``lambda(t) (T(x) - x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (op.dim,):
        raise DimensionError(f"state has shape {x.shape}, operator acts on R^{op.dim}")
    return s.eval(t) * (op.fn(x) - x)


class _Guard:
    def __init__(self, x0):
        self.limit = _DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(x0)))

    def __call__(self, t, x):
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at t={t:.6g}")
        if np.linalg.norm(x) > self.limit:
            raise DivergenceError(f"state norm exceeded {self.limit:.3g} at t={t:.6g}")


def _euler_step(f, t, x, h):
    return x + h * f(t, x)


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + h / 2, x + (h / 2) * k1)
    k3 = f(t + h / 2, x + (h / 2) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _fixed_step(f, x0, times, h, step, guard):
    out = np.empty((times.size, x0.size))
    out[0] = x0
    t, x = 0.0, x0
    for i, target in enumerate(times[1:], start=1):
        while t < target:
            # snap to the sample instead of leaving a sliver step
            if t + h >= target - 1e-12 * max(1.0, target):
                x = step(f, t, x, target - t)
                t = target
            else:
                x = step(f, t, x, h)
                t = t + h
            guard(t, x)
        out[i] = x
    return out


def _rms(v):
    return math.sqrt(float(np.mean(v * v)))


def _initial_step(f, t, x, fx, atol, rtol, span):
    scale = atol + np.abs(x) * rtol
    d0, d1 = _rms(x / scale), _rms(fx / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(t + h0, x + h0 * fx)
    d2 = _rms((f1 - fx) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _dormand_prince(f, x0, times, t_end, breaks, atol, rtol, guard):
    out = np.empty((times.size, x0.size))
    out[0] = x0
    next_sample = 1
    edges = [0.0, *[float(b) for b in breaks], t_end]
    t, x = 0.0, x0
    h = None
    h_min = _UNDERFLOW_FACTOR * t_end
    n_accept = n_reject = 0

    for seg_lo, seg_hi in zip(edges[:-1], edges[1:]):
        # stage times are kept strictly left of a breakpoint so a left-closed
        # piecewise schedule contributes its value on [seg_lo, seg_hi)
        t_cap = math.nextafter(seg_hi, -math.inf) if seg_hi < t_end else seg_hi

        def g(tt, xx):
            return f(min(tt, t_cap), xx)

        fx = f(t, x)
        if h is None:
            h = _initial_step(g, t, x, fx, atol, rtol, seg_hi - seg_lo)
        while t < seg_hi:
            last = t + h >= seg_hi - 1e-12 * max(1.0, seg_hi)
            if last:
                h = seg_hi - t
            k = [fx]
            for i in range(1, 7):
                xi = x + h * sum(a * kj for a, kj in zip(_A[i], k))
                k.append(g(t + _C[i] * h, xi))
            x_new = x + h * sum(a * kj for a, kj in zip(_A[6], k))
            err_vec = h * sum(e * kj for e, kj in zip(_E, k))
            scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
            err = _rms(err_vec / scale)
            if not np.isfinite(err):
                raise DivergenceError(f"non-finite error estimate at t={t:.6g}")
            if err <= 1.0:
                t_new = seg_hi if last else t + h
                f_new = k[6]
                while next_sample < times.size and times[next_sample] <= t_new:
                    ts = times[next_sample]
                    if ts == t_new:
                        out[next_sample] = x_new
                    else:
                        th = (ts - t) / h
                        weights = _P @ np.array([th, th * th, th ** 3, th ** 4])
                        out[next_sample] = x + h * sum(wj * kj for wj, kj in zip(weights, k))
                    next_sample += 1
                guard(t_new, x_new)
                t, x, fx = t_new, x_new, f_new
                n_accept += 1
                factor = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
            else:
                n_reject += 1
                factor = max(0.2, 0.9 * err ** -0.2)
            h *= factor
            if h < h_min:
                raise NumericalError(f"step size underflow (h={h:.3g}) at t={t:.6g}")
    log.debug("rk45: %d accepted, %d rejected steps", n_accept, n_reject)
    return out, {"accepted_steps": n_accept, "rejected_steps": n_reject}


def integrate(op, s, x0, cfg):
    """Integrate the relaxed fixed-point flow from `x0` and sample it.

    Parameters
    ----------
    op : OperatorHandle
        The operator ``T``.
    s : Schedule
        Relaxation ``lambda(t)``.
    x0 : array-like
        Initial state, of dimension ``op.dim``.
    cfg : FlowConfig

    Returns
    -------
    Trajectory

    Raises
    ------
    DivergenceError
        If the state becomes non-finite or exceeds ``1e12 (1 + ||x0||)`` in norm.
    NumericalError
        If the adaptive step size underflows.
    """
    x0 = check_vector(x0, dim=op.dim, name="x0")
    fn = op.fn
    lam = s.eval

    def f(t, x):
        return lam(t) * (fn(x) - x)

    guard = _Guard(x0)
    times = cfg.sample_times
    stats = {}
    if cfg.method == "rk45":
        states, stats = _dormand_prince(f, x0, times, cfg.t_end, s.discontinuities(cfg.t_end),
                                        cfg.abs_tol, cfg.rel_tol, guard)
    else:
        step = _euler_step if cfg.method == "euler" else _rk4_step
        states = _fixed_step(f, x0, times, cfg.h, step, guard)

    res_vec = np.array([fn(x) for x in states]) - states
    residuals = np.linalg.norm(res_vec, axis=1)
    lambdas = s.eval_many(times)
    meta = {"operator": op.label, "schedule": s.kind, "method": cfg.method, "t_end": cfg.t_end, **stats}
    if cfg.method == "rk45":
        meta.update(abs_tol=cfg.abs_tol, rel_tol=cfg.rel_tol)
    return Trajectory(
        times=times.copy(),
        states=states,
        residuals=residuals,
        speeds=lambdas * residuals,
        lambdas=lambdas,
        derivatives=lambdas[:, None] * res_vec if cfg.record_derivative else None,
        meta=meta,
    )
