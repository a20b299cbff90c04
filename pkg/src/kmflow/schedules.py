"""Relaxation schedules ``lambda(t)`` and the convergence-condition predicates.

Four kinds are supported:

* ``constant(c)``
* ``hyperbolic(a)``: ``a / (t + 1)``
* ``piecewise(breakpoints, values)``: ``values[k]`` on ``[breakpoints[k-1], breakpoints[k])``,
  intervals closed on the left, ``len(values) == len(breakpoints) + 1``
* ``table(times, values)``: linear interpolation, held constant outside the table

Each carries an explicit upper bound ``lambda_max`` so the same machinery serves
the ``[0, 1]``, ``[0, 1/alpha]`` and ``[0, delta]`` regimes.
"""

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .exceptions import DomainError, SpecError
from .validation import check_scalar, check_vector, frozen

_QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class Schedule:
    kind: str
    lambda_max: float
    c: float = 0.0
    a: float = 0.0
    breakpoints: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    times: Optional[np.ndarray] = field(default=None, repr=False)

    # ------------------------------------------------------------ constructors

    @staticmethod
    def _upper(lambda_max):
        if lambda_max is None:
            return 1.0
        lambda_max = check_scalar(lambda_max, "lambda_max")
        if lambda_max <= 0.0:
            raise SpecError("schedule upper bound must be positive")
        return lambda_max

    @classmethod
    def constant(cls, c, lambda_max=None):
        lam = cls._upper(lambda_max)
        c = check_scalar(c, "constant value", low=0.0, high=lam)
        return cls("constant", lam, c=c)

    @classmethod
    def hyperbolic(cls, a=1.0, lambda_max=None):
        lam = cls._upper(lambda_max)
        # the maximum a/(t+1) is attained at t = 0
        a = check_scalar(a, "hyperbolic numerator", low=0.0, high=lam)
        return cls("hyperbolic", lam, a=a)

    @classmethod
    def piecewise(cls, breakpoints, values, lambda_max=None):
        lam = cls._upper(lambda_max)
        bps = np.asarray(breakpoints, dtype=float).reshape(-1)
        vals = check_vector(values, dim=bps.size + 1, name="piecewise values")
        if bps.size and (bps[0] <= 0.0 or np.any(np.diff(bps) <= 0.0)):
            raise SpecError("piecewise breakpoints must be positive and strictly increasing")
        if not np.all(np.isfinite(bps)):
            raise SpecError("piecewise breakpoints must be finite")
        if np.any(vals < 0.0) or np.any(vals > lam):
            raise SpecError(f"piecewise values must lie in [0, {lam:g}]")
        return cls("piecewise", lam, breakpoints=frozen(bps), values=frozen(vals))

    @classmethod
    def table(cls, times, values, lambda_max=None):
        lam = cls._upper(lambda_max)
        ts = check_vector(times, name="table times")
        vals = check_vector(values, dim=ts.size, name="table values")
        if ts[0] < 0.0 or np.any(np.diff(ts) <= 0.0):
            raise SpecError("table times must be nonnegative and strictly increasing")
        if np.any(vals < 0.0) or np.any(vals > lam):
            raise SpecError(f"table values must lie in [0, {lam:g}]")
        return cls("table", lam, times=frozen(ts), values=frozen(vals))

    # ------------------------------------------------------------ evaluation

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = float(t)
        if not t >= 0.0:
            raise DomainError(f"schedule evaluated at t={t} < 0")
        if self.kind == "constant":
            return self.c
        if self.kind == "hyperbolic":
            return self.a / (t + 1.0)
        if self.kind == "piecewise":
            return float(self.values[bisect.bisect_right(self.breakpoints, t)])
        return float(np.interp(t, self.times, self.values))

    def eval_many(self, ts):
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0.0):
            raise DomainError("schedule evaluated at negative time")
        if self.kind == "constant":
            return np.full(ts.shape, self.c)
        if self.kind == "hyperbolic":
            return self.a / (ts + 1.0)
        if self.kind == "piecewise":
            return self.values[np.searchsorted(self.breakpoints, ts, side="right")]
        return np.interp(ts, self.times, self.values)

    def discontinuities(self, t_end=math.inf):
        """Points in ``(0, t_end)`` where the schedule is not smooth."""
        if self.kind == "piecewise":
            pts = self.breakpoints
        elif self.kind == "table":
            pts = self.times
        else:
            return np.empty(0)
        return np.asarray(pts[(pts > 0.0) & (pts < t_end)])

    def bounds(self, t_end):
        """Exact ``(inf, sup)`` of the schedule over ``[0, t_end]``."""
        if self.kind == "constant":
            return self.c, self.c
        if self.kind == "hyperbolic":
            return self.a / (t_end + 1.0), self.a
        if self.kind == "piecewise":
            k = bisect.bisect_right(self.breakpoints, t_end)
            vals = self.values[: k + 1]
            return float(vals.min()), float(vals.max())
        # extrema of a piecewise-linear interpolant sit at nodes or endpoints
        pts = np.concatenate([[0.0, t_end], self.times[self.times <= t_end]])
        vals = self.eval_many(pts)
        return float(vals.min()), float(vals.max())

    def limit_inf(self):
        """``inf`` over ``[0, inf)`` when known in closed form, else ``None``."""
        if self.kind == "constant":
            return self.c
        if self.kind == "hyperbolic":
            return 0.0
        if self.kind == "piecewise":
            return float(self.values.min())
        return None

    # ------------------------------------------------------------ integrals

    def _check_interval(self, a, b):
        a, b = float(a), float(b)
        if not (0.0 <= a <= b):
            raise DomainError(f"need 0 <= a <= b, got [{a}, {b}]")
        return a, b

    def _piece_integral(self, a, b, power):
        edges = np.concatenate([[0.0], self.breakpoints, [math.inf]])
        total = 0.0
        for k, v in enumerate(self.values):
            lo, hi = max(a, edges[k]), min(b, edges[k + 1])
            if hi > lo:
                total += v ** power * (hi - lo)
        return total

    def _quad(self, func, a, b):
        if b == a:
            return 0.0
        pts = self.times[(self.times > a) & (self.times < b)]
        # split at table nodes so each quad call sees a smooth integrand
        edges = np.concatenate([[a], pts, [b]])
        return float(sum(integrate.quad(func, lo, hi, epsabs=_QUAD_ABS_TOL, epsrel=1e-12, limit=200)[0]
                         for lo, hi in zip(edges[:-1], edges[1:])))

    def integral(self, a, b):
        """``int_a^b lambda``."""
        a, b = self._check_interval(a, b)
        if self.kind == "constant":
            return self.c * (b - a)
        if self.kind == "hyperbolic":
            return self.a * (math.log1p(b) - math.log1p(a))
        if self.kind == "piecewise":
            return self._piece_integral(a, b, 1)
        return self._quad(self.eval, a, b)

    def integral_sq(self, a, b):
        """``int_a^b lambda^2``."""
        a, b = self._check_interval(a, b)
        if self.kind == "constant":
            return self.c ** 2 * (b - a)
        if self.kind == "hyperbolic":
            return self.a ** 2 * (1.0 / (1.0 + a) - 1.0 / (1.0 + b))
        if self.kind == "piecewise":
            return self._piece_integral(a, b, 2)
        return self._quad(lambda t: self.eval(t) ** 2, a, b)

    def integral_damped(self, a, b, ceiling=1.0):
        """``int_a^b lambda (ceiling - lambda)``."""
        ceiling = check_scalar(ceiling, "ceiling", low=0.0, low_open=True)
        a, b = self._check_interval(a, b)
        if self.kind == "table":
            return self._quad(lambda t: self.eval(t) * (ceiling - self.eval(t)), a, b)
        return ceiling * self.integral(a, b) - self.integral_sq(a, b)


def eval_schedule(s, t):
    return s.eval(t)


def integral_lambda(s, a, b):
    return s.integral(a, b)


def integral_damped(s, a, b, ceiling=1.0):
    return s.integral_damped(a, b, ceiling)


@dataclass(frozen=True)
class ConditionReport:
    """Numeric evidence for the three relaxation hypotheses.

    * ``inf_positive``: ``inf lambda > 0``
    * ``damped_diverges``: ``int lambda (ceiling - lambda) = inf``
    * ``lambda_diverges``: ``int lambda = inf``

    Verdicts use the closed form when the kind admits one (``exact`` is True)
    and otherwise a finite-horizon growth heuristic.  Either way they are
    evidence, not proofs.
    """

    horizon: float
    ceiling: float
    inf_estimate: float
    inf_positive: bool
    damped_integral: float
    damped_diverges: bool
    lambda_integral: float
    lambda_diverges: bool
    exact: bool
    label: str = "numeric evidence"


def _grows(integral, horizon, tol=1e-12):
    """Dyadic growth test for an improper integral of a nonnegative function.

    The mass on ``[H/2, H]`` must be positive and at least 0.9 times the mass
    on ``[H/4, H/2]``.  Constant or logarithmic accumulation passes, summable
    tails such as exponentials, compact support or ``t^-2`` fail.
    """
    late = integral(horizon / 2.0, horizon)
    early = integral(horizon / 4.0, horizon / 2.0)
    return late > tol and late >= 0.9 * early - tol


def check_conditions(s, horizon, ceiling=1.0):
    horizon = check_scalar(horizon, "horizon", low=0.0, low_open=True)
    ceiling = check_scalar(ceiling, "ceiling", low=0.0, low_open=True)
    inf_h = s.bounds(horizon)[0]
    damped = s.integral_damped(0.0, horizon, ceiling)
    total = s.integral(0.0, horizon)

    if s.kind == "constant":
        c = s.c
        verdicts = (c > 0.0, 0.0 < c < ceiling, c > 0.0)
    elif s.kind == "hyperbolic":
        verdicts = (False, s.a > 0.0, s.a > 0.0)
    elif s.kind == "piecewise":
        tail = float(s.values[-1])
        verdicts = (float(s.values.min()) > 0.0, tail * (ceiling - tail) > 0.0, tail > 0.0)
    else:
        verdicts = (
            inf_h > 0.0,
            _grows(lambda a, b: s.integral_damped(a, b, ceiling), horizon),
            _grows(s.integral, horizon),
        )
    return ConditionReport(horizon, ceiling, inf_h, verdicts[0], damped, verdicts[1], total,
                           verdicts[2], exact=s.kind != "table")
