import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from octrl import models
from octrl.core import (ConstantController, DiscreteTrajectory, LINEAR,
                        PIDController, StateFeedbackController, ZOH,
                        closed_loop_rhs, compute_control, evaluate_dynamics,
                        interpolate)
from octrl.errors import ConfigurationError, NumericalFault

finite_floats = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def make_feedback(times, u_ff, K, x_ref):
    return StateFeedbackController(
        DiscreteTrajectory(times, u_ff, ZOH),
        DiscreteTrajectory(times, K, ZOH),
        DiscreteTrajectory(times, x_ref, ZOH))


class TestEvaluateDynamics:
    def test_double_integrator(self):
        sys = models.double_integrator()
        dx = evaluate_dynamics(sys, [1.0, 2.0], [3.0], 0.0)
        assert np.allclose(dx, [2.0, 3.0])

    def test_pendulum_hanging_equilibrium(self):
        sys = models.pendulum()
        assert np.allclose(evaluate_dynamics(sys, [0.0, 0.0], [0.0], 0.0), 0.0)

    def test_pendulum_sideways(self):
        # hand evaluation: thetadd = (0 - m g l sin(pi/2) - 0) / (m l^2) = -g/l
        sys = models.pendulum()
        dx = evaluate_dynamics(sys, [np.pi / 2, 0.0], [0.0], 0.0)
        assert np.allclose(dx, [0.0, -9.81])

    def test_deterministic_bit_identical(self):
        sys = models.pendulum()
        x, u = np.array([0.3, -0.2]), np.array([0.7])
        a = evaluate_dynamics(sys, x, u, 1.5)
        b = evaluate_dynamics(sys, x, u, 1.5)
        assert a.tobytes() == b.tobytes()

    def test_nonfinite_output_faults_with_index(self):
        from octrl.core import FunctionControlledSystem
        sys = FunctionControlledSystem(
            lambda x, u, t: np.array([x[0], np.inf]), 2, 1)
        with pytest.raises(NumericalFault) as exc:
            evaluate_dynamics(sys, [0.0, 0.0], [0.0], 0.0)
        assert exc.value.index == 1

    def test_dimension_mismatch(self):
        sys = models.double_integrator()
        with pytest.raises(ConfigurationError):
            evaluate_dynamics(sys, [1.0, 2.0, 3.0], [0.0], 0.0)


class TestControllers:
    def test_constant(self):
        ctrl = ConstantController([0.5])
        assert np.allclose(compute_control(ctrl, [9.0, 9.0], 123.0), [0.5])

    def test_feedback_vanishes_on_reference(self):
        times = np.array([0.0, 1.0])
        ctrl = make_feedback(times, [[2.0], [3.0]],
                             [[[1.0, 1.0]], [[1.0, 1.0]]],
                             [[0.5, 0.5], [1.0, 1.0]])
        assert np.allclose(ctrl.compute([0.5, 0.5], 0.0), [2.0])

    def test_feedback_matrix_vector(self):
        times = np.array([0.0])
        ctrl = make_feedback(times, [[0.0]], [[[1.0, 0.0]]], [[0.0, 0.0]])
        assert np.allclose(ctrl.compute([2.0, 5.0], 0.0), [2.0])

    def test_feedback_extrapolation_flagged(self):
        times = np.array([0.0, 1.0])
        ctrl = make_feedback(times, [[1.0], [2.0]],
                             [[[0.0, 0.0]], [[0.0, 0.0]]],
                             [[0.0, 0.0], [0.0, 0.0]])
        u, extrapolated = ctrl.compute_info([0.0, 0.0], 5.0)
        assert np.allclose(u, [2.0]) and extrapolated
        _, inside = ctrl.compute_info([0.0, 0.0], 0.5)
        assert not inside

    @given(x1=st.tuples(finite_floats, finite_floats),
           x2=st.tuples(finite_floats, finite_floats))
    def test_feedback_affine_in_state(self, x1, x2):
        times = np.array([0.0])
        x_ref = np.array([0.3, -0.7])
        ctrl = make_feedback(times, [[0.4]], [[[1.2, -0.5]]], [x_ref])
        x1, x2 = np.asarray(x1), np.asarray(x2)
        lhs = ctrl.compute(x1, 0.0) + ctrl.compute(x2, 0.0)
        rhs = ctrl.compute(x1 + x2 - x_ref, 0.0) + ctrl.compute(x_ref, 0.0)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_pid_tracks_setpoint_error(self):
        pid = PIDController(kp=[2.0], ki=[0.0], kd=[0.0], setpoint=[1.0])
        assert np.allclose(pid.compute([0.0, 0.0], 0.0), [2.0])

    @given(st.lists(finite_floats, min_size=2, max_size=40))
    def test_pid_integral_clamped(self, errors):
        limit = 0.5
        pid = PIDController(kp=[0.0], ki=[1.0], kd=[0.0], setpoint=[0.0],
                            integral_limit=limit)
        for k, e in enumerate(errors):
            pid.compute([-e, 0.0], 0.1 * k)
            assert abs(pid.integral_state[0]) <= limit + 1e-15


class TestInterpolate:
    traj_linear = DiscreteTrajectory([0.0, 1.0], [[0.0], [10.0]], LINEAR)
    traj_zoh = DiscreteTrajectory([0.0, 1.0], [[0.0], [10.0]], ZOH)

    def test_linear_blend(self):
        assert np.allclose(interpolate(self.traj_linear, 0.25), [2.5])

    def test_zoh_holds_left(self):
        assert np.allclose(interpolate(self.traj_zoh, 0.99), [0.0])

    def test_edge_hold_before_start(self):
        assert np.allclose(interpolate(self.traj_linear, -1.0), [0.0])

    @given(st.integers(min_value=0, max_value=4))
    def test_exact_timestamp_returns_stored_value(self, idx):
        times = np.array([0.0, 0.5, 1.5, 2.0, 7.0])
        values = np.array([[1.0], [-2.0], [4.0], [0.5], [3.0]])
        for mode in (LINEAR, ZOH):
            traj = DiscreteTrajectory(times, values, mode)
            assert interpolate(traj, times[idx])[0] == values[idx][0]

    def test_rejects_nonincreasing_timestamps(self):
        with pytest.raises(ConfigurationError):
            DiscreteTrajectory([0.0, 0.0], [[1.0], [2.0]])


class TestClosedLoop:
    def test_double_integrator_constant(self):
        sys = models.double_integrator().attach_controller(ConstantController([1.0]))
        assert np.allclose(closed_loop_rhs(sys, [0.0, 0.0], 0.0), [0.0, 1.0])

    def test_zero_controller_at_equilibrium(self):
        sys = models.pendulum().attach_controller(ConstantController([0.0]))
        assert np.allclose(closed_loop_rhs(sys, [0.0, 0.0], 0.0), 0.0)

    def test_no_controller_is_error(self):
        with pytest.raises(ConfigurationError):
            closed_loop_rhs(models.pendulum(), [0.0, 0.0], 0.0)

    def test_feedback_on_reference_equals_open_loop(self):
        # on the reference the feedback term vanishes, so the closed loop
        # reproduces the open-loop rhs at (x_ref, u_ff)
        sys = models.pendulum()
        x_ref = np.array([0.4, -0.1])
        u_ff = np.array([0.8])
        ctrl = make_feedback(np.array([0.0]), [u_ff], [[[3.0, 1.0]]], [x_ref])
        sys.attach_controller(ctrl)
        assert np.allclose(closed_loop_rhs(sys, x_ref, 0.0),
                           evaluate_dynamics(sys, x_ref, u_ff, 0.0))
