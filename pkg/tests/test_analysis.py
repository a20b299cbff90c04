import numpy as np
import pytest

from kmflow import (
    FlowConfig,
    InsufficientData,
    MonotoneSpec,
    PreconditionError,
    Schedule,
    fb_diagnostics,
    identity,
    integrate,
    little_o_check,
    make_forward_backward,
    lyapunov_report,
    rate_bound_check,
    rotation,
    slope_fit,
)
from kmflow.analysis import dyadic_checkpoints, energy_report, loglog_slope, max_increase, residual_report
from kmflow.flow import Trajectory
from kmflow.operators import SmoothSpec, linear_map
from kmflow.problems import make_quadratic, rank_deficient_lasso, standard_problems

HALF = Schedule.constant(0.5)


@pytest.fixture(scope="module")
def quarter_turn():
    traj = integrate(rotation(np.pi / 2), HALF, [1.0, 0.0], FlowConfig(t_end=64.0, n_samples=1281))
    return traj


def synthetic(times, residuals, states=None, lam=0.5):
    times = np.asarray(times, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if states is None:
        states = np.zeros((times.size, 1))
    lambdas = np.full(times.size, lam)
    return Trajectory(times, np.asarray(states, dtype=float), residuals, lambdas * residuals, lambdas)


def test_max_increase():
    assert max_increase([3, 2, 2.5, 1]) == 0.5
    assert max_increase([3, 2, 1]) == 0.0
    assert max_increase([1]) == 0.0


def test_lyapunov_identity_flow():
    traj = integrate(identity(2), HALF, [1.0, 1.0], FlowConfig(t_end=3.0, n_samples=4))
    rep = lyapunov_report(traj, [1.0, 1.0])
    assert rep.passed and np.all(rep.dist_sq == 0)


def test_lyapunov_closed_form():
    traj = integrate(linear_map(-np.eye(2)), Schedule.constant(1.0), [1.0, 0.0],
                     FlowConfig(t_end=2.0, n_samples=21))
    rep = lyapunov_report(traj, [0.0, 0.0])
    assert rep.passed and np.all(rep.diffs < 0)
    assert np.allclose(rep.dist_sq, np.exp(-4 * traj.times), atol=1e-8)


def test_lyapunov_detects_corruption(quarter_turn):
    states = quarter_turn.states.copy()
    states[20] *= 1.2
    bad = Trajectory(quarter_turn.times, states, quarter_turn.residuals, quarter_turn.speeds, quarter_turn.lambdas)
    rep = lyapunov_report(bad, [0.0, 0.0])
    assert not rep.passed and rep.first_violation == 20
    assert rep.as_dict()["first_violation"] == 20


def test_residual_report_detects_bump():
    ok, worst = residual_report(synthetic([0, 1, 2, 3], [1.0, 0.5, 0.6, 0.2]))
    assert not ok and worst == pytest.approx(0.1)


def test_rate_bound_workhorse(quarter_turn):
    rep = rate_bound_check(quarter_turn, HALF, 1.0)
    assert rep.passed and rep.tau_lower == 0.25 and rep.bound_margin <= 0
    t = quarter_turn.times[1:]
    assert np.all(quarter_turn.residuals[1:] <= 2 / np.sqrt(t) + 1e-9)


def test_rate_bound_identity():
    traj = integrate(identity(2), HALF, [1.0, 1.0], FlowConfig(t_end=5.0, n_samples=6))
    assert rate_bound_check(traj, HALF, 0.0).passed


def test_rate_bound_detects_violation():
    # residual decaying like 3/sqrt(t) breaks the bound for dist0 = 1, tau = 1/4
    t = np.linspace(0, 10, 11)
    traj = synthetic(t, np.concatenate([[3.0], 3 / np.sqrt(t[1:])]))
    rep = rate_bound_check(traj, HALF, 1.0)
    assert not rep.passed and rep.bound_margin == pytest.approx(0.5)


@pytest.mark.parametrize("s", [Schedule.constant(1.0), Schedule.hyperbolic(1.0), Schedule.constant(0.0)])
def test_rate_preconditions(s):
    traj = integrate(identity(1), s, [1.0], FlowConfig(t_end=2.0, n_samples=3))
    with pytest.raises(PreconditionError):
        rate_bound_check(traj, s, 0.0)
    with pytest.raises(PreconditionError):
        little_o_check(traj, s)


def test_little_o_workhorse(quarter_turn):
    rep = little_o_check(quarter_turn, HALF)
    assert rep.passed
    assert rep.checkpoints == sorted(rep.checkpoints) and rep.checkpoints[-1] == 64.0
    assert all(l <= r * (1 + 1e-6) + 1e-12 for l, r in zip(rep.lhs, rep.rhs))
    assert rep.little_o_trend[-1] < rep.little_o_trend[-5]


def test_little_o_identity():
    traj = integrate(identity(2), HALF, [1.0, 1.0], FlowConfig(t_end=8.0, n_samples=17))
    rep = little_o_check(traj, HALF)
    assert rep.passed and max(rep.lhs) == 0 and max(rep.rhs) == 0


def test_little_o_negative_identity():
    traj = integrate(linear_map(-np.eye(1)), HALF, [1.0], FlowConfig(t_end=64.0, n_samples=641))
    assert little_o_check(traj, HALF).passed


def test_little_o_detects_growth():
    # residuals growing like sqrt(t) break the tail inequality and the trend
    t = np.linspace(0, 64, 641)
    rep = little_o_check(synthetic(t, 1 + np.sqrt(t)), HALF)
    assert not rep.passed


def test_dyadic_checkpoints(quarter_turn):
    pts = dyadic_checkpoints(quarter_turn, max_levels=4)
    assert pts == [4.0, 8.0, 16.0, 32.0, 64.0]


def test_energy_settles(quarter_turn):
    cumulative, settled = energy_report(quarter_turn)
    assert settled and np.all(np.diff(cumulative) >= 0)
    # for this linear flow the total energy is int 1/4 |r|^2 = int 1/2 e^{-t} -> 1/2, trapezoid error ~ dt^2/12
    assert cumulative[-1] == pytest.approx(0.5, rel=1e-3)


def test_fb_diagnostics_rank_deficient():
    prob = rank_deficient_lasso()
    zeros = prob.known_fixed_points
    traj = integrate(prob.operator, Schedule.constant(1.0), [3.0, -1.0], FlowConfig(t_end=80.0, n_samples=81))
    rep = fb_diagnostics(traj, prob.fb_parts[1], zeros[0], zeros[1:])
    assert rep.passed and rep.zeros_spread <= 1e-9 and rep.final_gap <= 1e-6
    assert rep.as_dict()["passed"]


def test_fb_diagnostics_identity_gradient():
    prob = make_quadratic(np.eye(2), 0.5)
    traj = integrate(prob.operator, Schedule.constant(1.0), [1.0, -1.0], FlowConfig(t_end=60.0, n_samples=61))
    rep = fb_diagnostics(traj, prob.fb_parts[1], [0.0, 0.0])
    assert rep.passed
    assert np.allclose(rep.gaps, np.linalg.norm(traj.states, axis=1))


def test_fb_diagnostics_rejects_wrong_zero():
    prob = make_quadratic(np.eye(2), 0.5)
    traj = integrate(prob.operator, Schedule.constant(1.0), [1.0, -1.0], FlowConfig(t_end=60.0, n_samples=61))
    rep = fb_diagnostics(traj, prob.fb_parts[1], [0.0, 0.0], other_zeros=[[1.0, 0.0]])
    assert not rep.zeros_agree and not rep.passed


def test_strong_convergence_to_linear_solve():
    q = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    smooth = SmoothSpec.affine_gradient(q, b)
    op, delta = make_forward_backward(MonotoneSpec.zero(2), smooth, smooth.beta)
    x_star = np.linalg.solve(q, b)
    traj = integrate(op, Schedule.constant(1.2, lambda_max=delta), [5.0, 5.0], FlowConfig(t_end=60.0))
    assert np.linalg.norm(traj.final_state - x_star) <= 1e-8


def test_slope_examples():
    t = np.linspace(1, 100, 200)
    assert loglog_slope(t, 3 / np.sqrt(t), (1, 100)) == pytest.approx(-0.5, abs=1e-6)
    assert loglog_slope(t, 2 * np.exp(-t), (10, 100)) < -2
    traj = synthetic(t, np.zeros_like(t))
    with pytest.raises(InsufficientData):
        slope_fit(traj, (1, 100))
    with pytest.raises(InsufficientData):
        loglog_slope(t, 1 / t, (50, 50.3))


def test_slope_with_reference():
    prob, x0 = standard_problems()[-1]
    traj = integrate(prob.operator, Schedule.constant(1.0), x0, FlowConfig(t_end=10.0))
    assert slope_fit(traj, (1.0, 10.0), reference=np.zeros(2)) < -1
