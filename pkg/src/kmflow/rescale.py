"""Time rescaling between the relaxed flow and the autonomous flow.

With ``tau(t) = int_0^t lambda`` the solution of
``x' = lambda(t) (T x - x)`` is ``x(t) = w(tau(t))`` where ``w`` solves the
autonomous system ``w' = -(Id - T) w`` from the same initial point.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import RangeExceeded
from .flow import integrate
from .schedules import Schedule
from .validation import check_scalar

_ROOT_TOL = 1e-10


@dataclass(frozen=True)
class RescaleMap:
    """Clock change attached to a schedule: forward ``t -> tau`` or its inverse."""

    schedule: Schedule
    direction: str = "forward"
    t_max: float = np.inf

    def __call__(self, t):
        if self.direction == "forward":
            return forward_time(self.schedule, t)
        return inverse_time(self.schedule, t, self.t_max)


def forward_time(s, t):
    """``int_0^t lambda(u) du``."""
    return s.integral(0.0, t)


def inverse_time(s, tau, t_max):
    """Smallest ``u`` in ``[0, t_max]`` with ``forward_time(s, u) == tau``.

    Bisection on the nondecreasing map ``forward_time``; the bracket is kept
    so that the left end stays strictly below `tau`, which selects the
    leftmost solution when ``lambda`` vanishes on an interval.

    Raises
    ------
    RangeExceeded
        If ``forward_time(s, t_max) < tau``.
    """
    tau = check_scalar(tau, "tau", low=0.0)
    t_max = check_scalar(t_max, "t_max", low=0.0)
    if tau == 0.0:
        return 0.0
    reach = forward_time(s, t_max)
    if reach < tau - 1e-12 * (1.0 + tau):
        raise RangeExceeded(f"int_0^{t_max:g} lambda = {reach:.6g} < tau = {tau:.6g}")
    lo, hi = 0.0, t_max
    # 200 halvings exhaust double precision for any bracket
    for _ in range(200):
        if hi - lo <= _ROOT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if forward_time(s, mid) < tau:
            lo = mid
        else:
            hi = mid
    return hi


def rescale_comparison(op, s, x0, t_end, cfg):
    """Integrate both flows and tabulate ``x(t_i)`` against ``w(tau(t_i))``.

    `cfg` supplies the sample grid and the integrator settings; its ``t_end``
    is replaced by `t_end`.  Returns a dict of arrays: ``times``, ``tau``,
    ``direct``, ``rescaled`` and ``discrepancy``.
    """
    cfg = cfg.replace(t_end=t_end, sample_times=cfg.sample_times[cfg.sample_times <= t_end])
    direct = integrate(op, s, x0, cfg)
    taus = np.array([forward_time(s, t) for t in direct.times])
    grid, inverse = np.unique(taus, return_inverse=True)
    if grid[-1] > 0.0:
        auto_cfg = cfg.replace(t_end=float(grid[-1]), sample_times=grid)
        w = integrate(op, Schedule.constant(1.0), x0, auto_cfg).states[inverse]
    else:
        w = np.repeat(direct.states[:1], direct.times.size, axis=0)
    gap = np.linalg.norm(direct.states - w, axis=1)
    return {"times": direct.times, "tau": taus, "direct": direct.states, "rescaled": w, "discrepancy": gap}


def rescaled_equivalence(op, s, x0, t_end, cfg):
    """Max over samples of ``||x(t_i) - w(tau(t_i))||``."""
    return float(np.max(rescale_comparison(op, s, x0, t_end, cfg)["discrepancy"]))
