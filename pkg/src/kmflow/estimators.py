"""scikit-learn compatible wrappers.

``FixedPointFlow`` and ``KrasnoselskiiMann`` are transformers that map each
row of ``X`` (a starting point) to where the continuous or discrete dynamics
take it.  ``FlowLasso`` is a regressor that fits lasso coefficients by
integrating the forward-backward flow, using scikit-learn's objective
``1/(2 n) ||y - Xw||^2 + alpha ||w||_1``.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .discrete import km_iterate
from .flow import FlowConfig, integrate
from .operators import MonotoneSpec, SmoothSpec, make_forward_backward
from .schedules import Schedule


def _schedule(relaxation):
    if isinstance(relaxation, Schedule):
        return relaxation
    return Schedule.constant(float(relaxation), lambda_max=max(1.0, float(relaxation)))


class FixedPointFlow(TransformerMixin, BaseEstimator):
    """Push starting points along ``x' = lambda(t) (T x - x)``.

    Parameters
    ----------
    operator : OperatorHandle
        The nonexpansive (or averaged) operator ``T``.
    relaxation : float or Schedule, default=1.0
        ``lambda(t)``; a float means a constant schedule.
    t_end : float, default=50.0
        Integration horizon; ``transform`` returns ``x(t_end)``.
    n_samples : int, default=101
        Samples kept per trajectory during ``fit``.
    method, h, abs_tol, rel_tol
        Passed to :class:`~kmflow.flow.FlowConfig`.

    Attributes
    ----------
    trajectories_ : list of Trajectory
        One per row of the ``X`` given to ``fit``.
    residuals_ : ndarray of shape (n_rows,)
        Final fixed-point residuals.
    """

    def __init__(self, operator=None, relaxation=1.0, t_end=50.0, n_samples=101, method="rk45",
                 h=None, abs_tol=1e-9, rel_tol=1e-9):
        self.operator = operator
        self.relaxation = relaxation
        self.t_end = t_end
        self.n_samples = n_samples
        self.method = method
        self.h = h
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol

    def _config(self, n_samples):
        return FlowConfig(t_end=self.t_end, n_samples=n_samples, method=self.method, h=self.h,
                          abs_tol=self.abs_tol, rel_tol=self.rel_tol)

    def fit(self, X, y=None):
        X = validate_data(self, X, reset=True)
        if X.shape[1] != self.operator.dim:
            raise ValueError(f"X has {X.shape[1]} features, operator acts on R^{self.operator.dim}")
        s = _schedule(self.relaxation)
        cfg = self._config(self.n_samples)
        self.trajectories_ = [integrate(self.operator, s, x0, cfg) for x0 in X]
        self.residuals_ = np.array([tr.residuals[-1] for tr in self.trajectories_])
        return self

    def transform(self, X):
        check_is_fitted(self, "trajectories_")
        X = validate_data(self, X, reset=False)
        s = _schedule(self.relaxation)
        cfg = self._config(2)
        return np.vstack([integrate(self.operator, s, x0, cfg).final_state for x0 in X])


class KrasnoselskiiMann(TransformerMixin, BaseEstimator):
    """Row-wise Krasnosel'skii-Mann iteration; ``transform`` returns the last iterate."""

    def __init__(self, operator=None, relaxation=0.5, n_steps=100):
        self.operator = operator
        self.relaxation = relaxation
        self.n_steps = n_steps

    def fit(self, X, y=None):
        X = validate_data(self, X, reset=True)
        self.logs_ = [km_iterate(self.operator, self.relaxation, x0, self.n_steps) for x0 in X]
        self.residuals_ = np.array([log.residuals[-1] for log in self.logs_])
        return self

    def transform(self, X):
        check_is_fitted(self, "logs_")
        X = validate_data(self, X, reset=False)
        return np.vstack([km_iterate(self.operator, self.relaxation, x0, self.n_steps).final for x0 in X])


class FlowLasso(RegressorMixin, BaseEstimator):
    """Lasso fitted by integrating the continuous forward-backward flow from ``w = 0``.

    Parameters
    ----------
    alpha : float, default=1.0
        Weight of the l1 penalty.
    step : float, optional
        Forward-backward step ``gamma``; defaults to ``beta``, the
        cocoercivity constant of the least-squares gradient.
    relaxation : float, default=1.0
        Constant ``lambda``, at most ``delta = min(1, beta/gamma) + 1/2``.
    t_end : float, default=200.0
    """

    def __init__(self, alpha=1.0, step=None, relaxation=1.0, t_end=200.0, abs_tol=1e-10, rel_tol=1e-10):
        self.alpha = alpha
        self.step = step
        self.relaxation = relaxation
        self.t_end = t_end
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        scale = 1.0 / np.sqrt(X.shape[0])
        smooth = SmoothSpec.least_squares(X * scale, y * scale)
        gamma = smooth.beta if self.step is None else self.step
        op, delta = make_forward_backward(MonotoneSpec.l1(X.shape[1], self.alpha), smooth, gamma)
        s = Schedule.constant(self.relaxation, lambda_max=delta)
        traj = integrate(op, s, np.zeros(X.shape[1]), FlowConfig(t_end=self.t_end, n_samples=2,
                                                                 abs_tol=self.abs_tol, rel_tol=self.rel_tol))
        self.coef_ = traj.final_state
        self.residual_ = float(traj.residuals[-1])
        self.delta_ = delta
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_
