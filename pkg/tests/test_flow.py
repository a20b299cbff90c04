import numpy as np
import pytest
from scipy.linalg import expm

from kmflow import (
    DimensionError,
    DivergenceError,
    FlowConfig,
    NumericalError,
    OperatorHandle,
    Schedule,
    SpecError,
    derivative,
    identity,
    integrate,
    rotation,
)
from kmflow.analysis import energy_report, lyapunov_report, max_increase, residual_report
from kmflow.operators import linear_map
from kmflow.problems import standard_problems

NEG = linear_map(-np.eye(2), label="-Id")


def test_derivative_examples():
    assert np.array_equal(derivative(identity(2), Schedule.hyperbolic(1.0), 3.0, [1.0, 2.0]), [0.0, 0.0])
    assert np.array_equal(derivative(NEG, Schedule.constant(1.0), 0.0, [1.0, 0.0]), [-2.0, 0.0])
    got = derivative(rotation(np.pi / 2), Schedule.constant(0.5), 0.0, [1.0, 0.0])
    assert np.allclose(got, [-0.5, 0.5], atol=1e-16)
    with pytest.raises(DimensionError):
        derivative(NEG, Schedule.constant(1.0), 0.0, [1.0])


def test_identity_is_stationary():
    traj = integrate(identity(2), Schedule.hyperbolic(1.0), [2.0, -1.0], FlowConfig(t_end=5.0, n_samples=11))
    assert np.all(traj.states == [2.0, -1.0])
    assert np.all(traj.residuals == 0.0)


@pytest.mark.parametrize("method, h, tol", [("rk45", None, 1e-8), ("rk4", 0.01, 1e-9), ("euler", 1e-4, 1e-4)])
def test_negative_identity_closed_form(method, h, tol):
    times = np.linspace(0.0, 3.0, 31)
    traj = integrate(NEG, Schedule.constant(1.0), [1.0, 0.0], FlowConfig(t_end=3.0, sample_times=times,
                                                                         method=method, h=h))
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-2 * times))) <= tol
    assert np.interp(1.0, times, traj.states[:, 0]) == pytest.approx(np.exp(-2.0), abs=tol)
    assert np.all(np.diff(np.linalg.norm(traj.states, axis=1)) < 0)


def test_linear_flow_against_matrix_exponential():
    # x' = 0.5 (R - I) x has the solution expm(0.5 t (R - I)) x0
    r = np.array([[0.0, -1.0], [1.0, 0.0]])
    times = np.array([0.0, 0.37, 1.0, 4.2, 10.0])
    traj = integrate(rotation(np.pi / 2), Schedule.constant(0.5), [1.0, 0.0],
                     FlowConfig(t_end=10.0, sample_times=times))
    exact = np.array([expm(0.5 * t * (r - np.eye(2))) @ [1.0, 0.0] for t in times])
    assert np.max(np.abs(traj.states - exact)) <= 1e-8


def test_piecewise_schedule_closed_form():
    # lambda = 1 on [0, 2), 0.25 afterwards; for T = -Id, x(t) = exp(-2 int_0^t lambda)
    s = Schedule.piecewise([2.0], [1.0, 0.25])
    times = np.array([0.0, 1.0, 2.0, 2.5, 6.0])
    traj = integrate(NEG, s, [1.0, 0.0], FlowConfig(t_end=6.0, sample_times=times))
    tau = np.array([s.integral(0.0, t) for t in times])
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-2 * tau))) <= 1e-8
    assert traj.meta["accepted_steps"] > 0


def test_table_schedule_matches_time_change():
    s = Schedule.table([0.0, 1.0, 3.0], [0.2, 0.9, 0.4])
    times = np.linspace(0.0, 5.0, 11)
    traj = integrate(NEG, s, [1.0, 0.0], FlowConfig(t_end=5.0, sample_times=times))
    tau = np.array([s.integral(0.0, t) for t in times])
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-2 * tau))) <= 1e-8


def test_trajectory_invariants():
    s = Schedule.hyperbolic(1.0)
    traj = integrate(rotation(2.0), s, [-0.3, 2.0], FlowConfig(t_end=30.0, n_samples=301,
                                                              record_derivative=True))
    assert np.all(np.diff(traj.times) > 0) and np.array_equal(traj.x0, [-0.3, 2.0])
    assert np.allclose(traj.speeds, s.eval_many(traj.times) * traj.residuals, rtol=1e-12, atol=0)
    assert np.allclose(np.linalg.norm(traj.derivatives, axis=1), traj.speeds, rtol=1e-12, atol=0)
    assert len(traj) == 301 and traj.dim == 2


@pytest.mark.parametrize("index", range(len(standard_problems())))
def test_fejer_residual_and_energy(index):
    prob, x0 = standard_problems()[index]
    traj = integrate(prob.operator, Schedule.constant(0.5), x0, FlowConfig(t_end=40.0, n_samples=801))
    for y in prob.known_fixed_points:
        d = traj.distances_to(y)
        assert max_increase(d) <= 1e-9 * (1 + d[0])
        assert lyapunov_report(traj, y).passed
    assert residual_report(traj)[0]
    _, settled = energy_report(traj)
    assert settled


def test_discrete_lyapunov_inequality():
    prob, x0 = standard_problems()[0]
    traj = integrate(prob.operator, Schedule.constant(0.5), x0, FlowConfig(t_end=20.0, n_samples=2001))
    d2 = np.sum(traj.states ** 2, axis=1)
    dt = np.diff(traj.times)
    assert np.all(np.diff(d2) <= 1e-7 * dt)


def test_halving_tolerance_is_consistent():
    prob, x0 = standard_problems()[2]
    cfg = FlowConfig(t_end=10.0, n_samples=11, abs_tol=1e-8, rel_tol=1e-8)
    coarse = integrate(prob.operator, Schedule.hyperbolic(1.0), x0, cfg)
    fine = integrate(prob.operator, Schedule.hyperbolic(1.0), x0, cfg.replace(abs_tol=5e-9, rel_tol=5e-9))
    assert np.linalg.norm(coarse.final_state - fine.final_state) <= 10 * 5e-9


def test_divergence_guard():
    with pytest.raises(DivergenceError):
        integrate(linear_map(3.0 * np.eye(2)), Schedule.constant(1.0), [1.0, 0.0], FlowConfig(t_end=100.0))
    with pytest.raises(DivergenceError):
        integrate(linear_map(3.0 * np.eye(1)), Schedule.constant(1.0), [1.0],
                  FlowConfig(t_end=100.0, method="euler", h=0.1))


def test_step_underflow():
    blowup = OperatorHandle(lambda x: x + x ** 3, 1, NEG.regularity, "cubic")
    with pytest.raises(NumericalError):
        integrate(blowup, Schedule.constant(1.0), [1.0], FlowConfig(t_end=1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(t_end=0.0)
    with pytest.raises(SpecError):
        FlowConfig(t_end=1.0, method="leapfrog")
    with pytest.raises(SpecError):
        FlowConfig(t_end=1.0, method="rk4")
    with pytest.raises(SpecError):
        FlowConfig(t_end=1.0, sample_times=[0.1, 0.5])
    with pytest.raises(SpecError):
        FlowConfig(t_end=1.0, sample_times=[0.0, 0.5, 0.5])
    with pytest.raises(SpecError):
        FlowConfig(t_end=1.0, sample_times=[0.0, 2.0])
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, abs_tol=0.0)
    cfg = FlowConfig(t_end=2.0, n_samples=5)
    assert cfg.sample_times.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert cfg.replace(t_end=4.0).sample_times[-1] == 4.0


def test_x0_dimension_checked():
    with pytest.raises(DimensionError):
        integrate(NEG, Schedule.constant(1.0), [1.0, 2.0, 3.0], FlowConfig(t_end=1.0))
