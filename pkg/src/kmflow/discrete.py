"""Discrete counterparts of the flow: Krasnosel'skii-Mann and forward-backward.

Relaxation sequences are either a constant or a :class:`~kmflow.schedules.Schedule`
sampled at the integers, so ``lambda_n = s(n)``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import SpecError
from .flow import FlowConfig, integrate
from .operators import make_forward_backward
from .schedules import Schedule
from .validation import check_vector


@dataclass
class IterateLog:
    """Iterates ``x_0..x_N``, their residuals ``||T x_n - x_n||`` and the ``lambda_n`` used.

    ``relaxations`` has one entry per step, so it is one shorter than ``iterates``.
    """

    iterates: np.ndarray
    residuals: np.ndarray
    relaxations: np.ndarray

    def __len__(self):
        return self.iterates.shape[0]

    @property
    def final(self):
        return self.iterates[-1]


def _relaxations(lam, n_steps, upper):
    if isinstance(lam, Schedule):
        values = lam.eval_many(np.arange(n_steps, dtype=float))
    elif callable(lam):
        values = np.array([float(lam(n)) for n in range(n_steps)])
    else:
        values = np.full(n_steps, float(lam))
    bad = np.flatnonzero((values < 0.0) | (values > upper) | ~np.isfinite(values))
    if bad.size:
        n = int(bad[0])
        raise SpecError(f"lambda_{n}={values[n]} is outside [0, {upper:g}]")
    return values


def _run(op, x0, lams):
    fn = op.fn
    x = check_vector(x0, dim=op.dim, name="x0")
    iterates = np.empty((lams.size + 1, op.dim))
    residuals = np.empty(lams.size + 1)
    iterates[0] = x
    for n, lam in enumerate(lams):
        r = fn(x) - x
        residuals[n] = np.linalg.norm(r)
        # same floating-point expression as the Euler step with h = 1
        x = x + lam * r
        iterates[n + 1] = x
    residuals[-1] = np.linalg.norm(fn(x) - x)
    return IterateLog(iterates, residuals, lams)


def km_iterate(op, lam, x0, n_steps):
    """Krasnosel'skii-Mann iteration ``x_{n+1} = x_n + lambda_n (T x_n - x_n)``.

    ``lambda_n`` must lie in ``[0, 1]``.
    """
    if n_steps < 0:
        raise SpecError("n_steps must be nonnegative")
    return _run(op, x0, _relaxations(lam, int(n_steps), 1.0))


def fb_iterate(a, b, gamma, lam, x0, n_steps):
    """Relaxed forward-backward iteration with ``lambda_n`` in ``[0, delta]``."""
    if n_steps < 0:
        raise SpecError("n_steps must be nonnegative")
    op, delta = make_forward_backward(a, b, gamma)
    return _run(op, x0, _relaxations(lam, int(n_steps), delta))


def euler_equals_km(op, s, x0, n_steps):
    """Max distance between unit-step Euler states of the flow and KM iterates.

    Both sides use ``lambda_n = s(n)``; the discrepancy is zero in exact
    arithmetic and in practice identical bit for bit.
    """
    x0 = check_vector(x0, dim=op.dim, name="x0")
    if n_steps == 0:
        return 0.0
    cfg = FlowConfig(t_end=float(n_steps), sample_times=np.arange(n_steps + 1, dtype=float),
                     method="euler", h=1.0)
    traj = integrate(op, s, x0, cfg)
    log = km_iterate(op, s, x0, n_steps)
    return float(np.max(np.linalg.norm(traj.states - log.iterates, axis=1)))
