"""Post-hoc diagnostics on recorded trajectories.

All checks are one-sided numerical evidence for the continuous-time
statements: Fejer monotonicity and the Lyapunov decrease, the
``d(x0, Fix T) / sqrt(tau t)`` residual bound, the dyadic tail inequality
behind the ``o(1/sqrt(t))`` rate, and forward-backward specific properties.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import InsufficientData, PreconditionError
from .operators import make_gradient
from .validation import check_vector

_MIN_SLOPE_POINTS = 4


def max_increase(values):
    """Largest forward difference ``values[i+1] - values[i]`` (0 for fewer than 2 values)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(max(np.max(np.diff(values)), 0.0))


@dataclass
class LyapunovReport:
    dist_sq: np.ndarray
    diffs: np.ndarray
    tolerance: float
    passed: bool
    first_violation: Optional[int]

    def as_dict(self):
        return {"passed": self.passed, "tolerance": self.tolerance,
                "max_increase": float(self.diffs.max(initial=0.0)),
                "first_violation": self.first_violation}


def lyapunov_report(traj, y):
    """Check that ``||x(t_i) - y||^2`` never increases by more than ``1e-9 (1 + ||x0 - y||^2)``."""
    y = check_vector(y, dim=traj.dim, name="y")
    d2 = np.sum((traj.states - y) ** 2, axis=1)
    diffs = np.diff(d2)
    tol = 1e-9 * (1.0 + d2[0])
    bad = np.flatnonzero(diffs > tol)
    first = int(bad[0]) + 1 if bad.size else None
    return LyapunovReport(d2, diffs, tol, first is None, first)


def residual_report(traj, slack=1e-9):
    """Monotone decrease of the fixed-point residual, ``(passed, worst increase)``."""
    worst = max_increase(traj.residuals)
    return worst <= slack, worst


def energy_report(traj):
    """Cumulative ``int ||x'||^2`` and whether its second half is a small share.

    Returns ``(cumulative, settled)`` with ``settled`` true when the mass on
    ``[t_end/2, t_end]`` is at most 10% of the total.
    """
    sq = traj.speeds ** 2
    steps = np.diff(traj.times) * 0.5 * (sq[1:] + sq[:-1])
    cumulative = np.concatenate([[0.0], np.cumsum(steps)])
    total = cumulative[-1]
    half = np.interp(traj.times[-1] / 2.0, traj.times, cumulative)
    return cumulative, bool(total - half <= 0.1 * total)


@dataclass
class RateReport:
    """Residual-rate diagnostics.

    ``bound_margin`` is ``max_i residual_i sqrt(tau t_i) - dist0`` (nonpositive
    when the bound holds).  The list fields are aligned with ``checkpoints``.
    """

    tau_lower: float
    passed: bool
    bound_margin: float = float("nan")
    speeds_ok: bool = True
    checkpoints: List[float] = field(default_factory=list)
    little_o_trend: List[float] = field(default_factory=list)
    tail_integrals: List[float] = field(default_factory=list)
    lhs: List[float] = field(default_factory=list)
    rhs: List[float] = field(default_factory=list)
    slope: float = float("nan")

    def as_dict(self):
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def _tau_lower(traj, s):
    t_end = float(traj.times[-1])
    lo, hi = s.bounds(t_end)
    if not (lo > 0.0 and hi < 1.0):
        raise PreconditionError(
            f"rate results need 0 < inf lambda <= sup lambda < 1 on [0, {t_end:g}], got [{lo:g}, {hi:g}]")
    lam = traj.lambdas
    return float(np.min(lam * (1.0 - lam)))


def rate_bound_check(traj, s, dist0):
    """Verify ``||x'(t)|| <= ||T x(t) - x(t)|| <= dist0 / sqrt(tau t)`` at every sample ``t > 0``.

    ``tau`` is the minimum of ``lambda (1 - lambda)`` over the sample grid and
    `dist0` must be the true distance from ``x0`` to the fixed-point set.
    """
    tau = _tau_lower(traj, s)
    t = traj.times
    pos = t > 0.0
    res = traj.residuals[pos]
    scaled = res * np.sqrt(tau * t[pos])
    margin = float(np.max(scaled - dist0)) if scaled.size else float("-inf")
    bound_ok = bool(np.all(res <= dist0 / np.sqrt(tau * t[pos]) + 1e-9))
    speeds_ok = bool(np.all(traj.speeds <= traj.residuals * (1.0 + 1e-12) + 1e-15))
    return RateReport(tau_lower=tau, passed=bound_ok and speeds_ok, bound_margin=margin, speeds_ok=speeds_ok)


def _tail_integral(times, integrand, lo, hi):
    inside = (times > lo) & (times < hi)
    ts = np.concatenate([[lo], times[inside], [hi]])
    vals = np.concatenate([[np.interp(lo, times, integrand)], integrand[inside],
                           [np.interp(hi, times, integrand)]])
    return float(np.sum(np.diff(ts) * 0.5 * (vals[1:] + vals[:-1])))


def dyadic_checkpoints(traj, max_levels=12):
    """``t_end / 2^k`` in increasing order, keeping ``t/2`` at or beyond the first positive sample."""
    t_end = float(traj.times[-1])
    first = float(traj.times[1]) if traj.times.size > 1 else t_end
    pts = []
    t = t_end
    for _ in range(max_levels + 1):
        if t / 2.0 < first:
            break
        pts.append(t)
        t /= 2.0
    return pts[::-1]


def little_o_check(traj, s, max_levels=12, trend_levels=4):
    """Dyadic tail inequality behind the ``o(1/sqrt t)`` residual rate.

    At each checkpoint ``t`` checks
    ``t ||x'(t)||^2 <= t r(t)^2 <= (2/tau) int_{t/2}^t lambda (1 - lambda) r^2``
    (trapezoid rule on the sample grid) with relative slack 1e-6.  Over the
    last ``trend_levels + 1`` checkpoints (``t_end / 2^trend_levels`` up to
    ``t_end``) the tail integrals and ``sqrt(t) r(t)`` must be nonincreasing
    up to 5%, plus an absolute allowance of ten times the integrator's
    absolute tolerance on ``r``.
    """
    tau = _tau_lower(traj, s)
    times = traj.times
    lam = traj.lambdas
    integrand = lam * (1.0 - lam) * traj.residuals ** 2
    report = RateReport(tau_lower=tau, passed=True)
    ok = True
    for t in dyadic_checkpoints(traj, max_levels):
        r = float(np.interp(t, times, traj.residuals))
        v = float(np.interp(t, times, traj.speeds))
        tail = _tail_integral(times, integrand, t / 2.0, t)
        lhs, rhs = t * r * r, (2.0 / tau) * tail
        ok &= t * v * v <= lhs * (1.0 + 1e-12) + 1e-15
        ok &= lhs <= rhs * (1.0 + 1e-6) + 1e-12
        report.checkpoints.append(t)
        report.lhs.append(lhs)
        report.rhs.append(rhs)
        report.tail_integrals.append(tail)
        report.little_o_trend.append(float(np.sqrt(t) * r))
    noise = 10.0 * traj.meta.get("abs_tol", 0.0)
    k0 = max(0, len(report.checkpoints) - trend_levels - 1)
    cps = report.checkpoints[k0:]
    tails, trend = report.tail_integrals[k0:], report.little_o_trend[k0:]
    for i in range(1, len(cps)):
        ok &= tails[i] <= 1.05 * tails[i - 1] + cps[i] * noise ** 2 + 1e-12
        ok &= trend[i] <= 1.05 * trend[i - 1] + np.sqrt(cps[i]) * noise + 1e-12
    report.passed = bool(ok)
    return report


@dataclass
class FBReport:
    gaps: np.ndarray
    final_gap: float
    final_ok: bool
    zeros_spread: float
    zeros_agree: bool

    @property
    def passed(self):
        return self.final_ok and self.zeros_agree

    def as_dict(self):
        return {"passed": self.passed, "final_gap": self.final_gap, "final_ok": self.final_ok,
                "zeros_spread": self.zeros_spread, "zeros_agree": self.zeros_agree}


def fb_diagnostics(traj, smooth, known_zero, other_zeros=()):
    """Convergence of ``B(x(t))`` to the common value of ``B`` on ``zer(A + B)``.

    Passes when ``||B x(t_end) - B z|| <= 1e-6 (1 + ||B z||)`` and, if several
    zeros are given, ``B`` agrees on all of them within 1e-9.
    """
    grad = make_gradient(smooth)
    z = check_vector(known_zero, dim=traj.dim, name="known_zero")
    bz = grad(z)
    gaps = np.array([np.linalg.norm(grad(x) - bz) for x in traj.states])
    spread = max((float(np.linalg.norm(grad(check_vector(o, dim=traj.dim)) - bz)) for o in other_zeros),
                 default=0.0)
    final_ok = bool(gaps[-1] <= 1e-6 * (1.0 + np.linalg.norm(bz)))
    return FBReport(gaps, float(gaps[-1]), final_ok, spread, spread <= 1e-9)


def loglog_slope(times, values, window):
    """Least-squares slope of ``log values`` against ``log t`` over ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (times >= lo) & (times <= hi) & (times > 0.0) & (values > 0.0)
    if np.count_nonzero(mask) < _MIN_SLOPE_POINTS:
        raise InsufficientData(
            f"need at least {_MIN_SLOPE_POINTS} samples with positive values in [{lo:g}, {hi:g}]")
    slope, _ = np.polyfit(np.log(times[mask]), np.log(values[mask]), 1)
    return float(slope)


def slope_fit(traj, window, reference=None):
    """Empirical log-log rate exponent of the residual (or of ``||x - reference||``)."""
    values = traj.residuals if reference is None else traj.distances_to(reference)
    return loglog_slope(traj.times, values, window)
