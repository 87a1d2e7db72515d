import math

import numpy as np
import pytest

from octrl import models
from octrl.core import (ConstantController, DiscreteTrajectory,
                        FunctionSystem, ZOH)
from octrl.errors import ConfigurationError, StiffnessFault
from octrl.integrate import (EULER, IntegratorSettings, RK4, RK45,
                             SYMPLECTIC_EULER, integrate_adaptive,
                             integrate_fixed, integrate_symplectic,
                             simulate_closed_loop)


def decay():
    return FunctionSystem(lambda x, t: -x, 1)


def forced_decay():
    return FunctionSystem(lambda x, t: -x + np.array([np.sin(t)]), 1)


def forced_decay_exact(t, x0):
    # x' = -x + sin t  ->  x = (x0 + 1/2) e^-t + (sin t - cos t)/2
    return (x0 + 0.5) * np.exp(-t) + 0.5 * (np.sin(t) - np.cos(t))


class TestFixed:
    def test_zero_rhs_constant(self):
        traj = integrate_fixed(FunctionSystem(lambda x, t: 0.0 * x, 1),
                               [7.0], 0.0, 1.3, IntegratorSettings(dt=0.25))
        assert np.allclose(traj.values, 7.0)

    def test_euler_single_step(self):
        traj = integrate_fixed(decay(), [1.0], 0.0, 0.5,
                               IntegratorSettings(scheme=EULER, dt=0.5))
        assert np.allclose(traj.values[-1], [0.5])

    def test_rk4_exponential(self):
        traj = integrate_fixed(FunctionSystem(lambda x, t: x, 1), [1.0], 0.0, 1.0,
                               IntegratorSettings(dt=0.1))
        # classical RK4 growth per step is sum_{k<=4} h^k/k!; at h=0.1 that
        # forces a final error of ~2.08e-6 (not below 1e-6)
        step_err = np.exp(0.1) - sum(0.1 ** k / math.factorial(k)
                                     for k in range(5))
        forced = np.e * 10 * step_err / np.exp(0.1)
        err = abs(traj.values[-1][0] - np.e)
        assert abs(err - forced) < 0.05 * forced

    def test_endpoints_exact(self):
        # 0.7 is not a multiple of dt; the final step is shortened
        traj = integrate_fixed(decay(), [1.0], 0.2, 0.9,
                               IntegratorSettings(dt=0.11))
        assert traj.timestamps[0] == 0.2 and traj.timestamps[-1] == 0.9
        assert traj.values[0][0] == 1.0

    def test_max_steps_guard(self):
        with pytest.raises(ConfigurationError):
            integrate_fixed(decay(), [1.0], 0.0, 1.0,
                            IntegratorSettings(dt=1e-4, max_steps=10))

    def test_rk4_order(self):
        # halving dt must shrink the final-state error by roughly 2^4
        errs = []
        for dt in (0.05, 0.025):
            traj = integrate_fixed(forced_decay(), [1.0], 0.0, 2.0,
                                   IntegratorSettings(dt=dt))
            errs.append(abs(traj.values[-1][0] - forced_decay_exact(2.0, 1.0)))
        ratio = errs[0] / errs[1]
        assert 12.0 <= ratio <= 20.0


class TestAdaptive:
    def test_decay_accuracy(self):
        traj = integrate_adaptive(decay(), [1.0], 0.0, 5.0,
                                  IntegratorSettings(dt=0.1, abs_tol=1e-8,
                                                     rel_tol=1e-8))
        assert abs(traj.values[-1][0] - np.exp(-5.0)) < 1e-7

    def test_zero_rhs(self):
        traj = integrate_adaptive(FunctionSystem(lambda x, t: 0.0 * x, 1),
                                  [3.0], 0.0, 10.0, IntegratorSettings(dt=0.5))
        assert np.allclose(traj.values[-1], [3.0])
        assert traj.timestamps[-1] == 10.0

    def test_fewer_steps_than_fixed_rk4_at_equal_accuracy(self):
        # smooth slow dynamics: the error controller stretches its steps
        sys = forced_decay()
        adaptive = integrate_adaptive(sys, [1.0], 0.0, 10.0,
                                      IntegratorSettings(dt=0.1, abs_tol=1e-7,
                                                         rel_tol=1e-7))
        exact = forced_decay_exact(10.0, 1.0)
        assert abs(adaptive.values[-1][0] - exact) < 1e-6
        fixed_dt = 0.01
        fixed = integrate_fixed(sys, [1.0], 0.0, 10.0,
                                IntegratorSettings(dt=fixed_dt))
        assert abs(fixed.values[-1][0] - exact) < 1e-6
        assert len(adaptive) < len(fixed)

    def test_stiffness_fault_on_underflow(self):
        # rhs blows up near t=1, forcing the step size to zero
        sys = FunctionSystem(lambda x, t: x / (1.0 - t), 1)
        with pytest.raises(StiffnessFault):
            integrate_adaptive(sys, [1.0], 0.0, 1.0,
                               IntegratorSettings(dt=0.1, max_steps=100000))

    def test_matches_fine_rk4_on_models(self):
        tol = 1e-8
        for name in ("pendulum", "double_integrator", "oscillator",
                     "planar_quadrotor"):
            sys = models.by_name(name)
            sys.attach_controller(ConstantController(0.1 * np.ones(sys.control_dim)))
            x0 = 0.1 * np.arange(1, sys.state_dim + 1)
            adaptive = integrate_adaptive(sys, x0, 0.0, 1.0,
                                          IntegratorSettings(dt=0.05, abs_tol=tol,
                                                             rel_tol=tol))
            fine = integrate_fixed(sys, x0, 0.0, 1.0, IntegratorSettings(dt=1e-4))
            err = np.max(np.abs(adaptive.values[-1] - fine.values[-1]))
            assert err < 10.0 * (tol + tol), name


class TestSymplectic:
    def test_single_step_formulas(self):
        sys = models.oscillator(k=1.0).attach_controller(ConstantController([0.0]))
        traj = integrate_symplectic(sys, [1.0, 0.0], 0.0, 0.1,
                                    IntegratorSettings(dt=0.1))
        assert np.allclose(traj.values[-1], [0.99, -0.1])

    def test_energy_bounded_100k_steps(self):
        sys = models.oscillator(k=1.0).attach_controller(ConstantController([0.0]))
        settings = IntegratorSettings(scheme=SYMPLECTIC_EULER, dt=0.01)
        traj = integrate_symplectic(sys, [1.0, 0.0], 0.0, 1000.0, settings)
        e0 = sys.energy(traj.values[0])
        energies = 0.5 * (traj.values[:, 0] ** 2 + traj.values[:, 1] ** 2)
        assert np.max(np.abs(energies - e0)) < 0.02 * e0

    def test_explicit_euler_energy_grows(self):
        sys = models.oscillator(k=1.0).attach_controller(ConstantController([0.0]))
        traj = integrate_fixed(sys, [1.0, 0.0], 0.0, 1000.0,
                               IntegratorSettings(scheme=EULER, dt=0.01))
        e0 = sys.energy(traj.values[0])
        energies = 0.5 * (traj.values[:, 0] ** 2 + traj.values[:, 1] ** 2)
        assert energies[-1] > 1.1 * e0
        assert np.all(np.diff(energies) >= -1e-12)

    def test_requires_symplectic_system(self):
        with pytest.raises(ConfigurationError):
            integrate_symplectic(decay(), [1.0], 0.0, 1.0, IntegratorSettings())


class TestClosedLoopSimulation:
    def test_constant_controller_equivalence(self):
        sys = models.pendulum()
        ctrl = ConstantController([0.3])
        settings = IntegratorSettings(dt=0.01)
        st_sim, ut_sim = simulate_closed_loop(sys, ctrl, [0.1, 0.0], 0.0, 1.0,
                                              control_dt=0.1, settings=settings)
        sys2 = models.pendulum().attach_controller(ctrl)
        direct = integrate_fixed(sys2, [0.1, 0.0], 0.0, 1.0, settings)
        assert np.allclose(st_sim.values[-1], direct.values[-1], atol=1e-12)
        assert np.allclose(ut_sim.values, 0.3)

    def test_stabilizing_feedback_contracts(self):
        # u = -[1, 2] x places both closed-loop eigenvalues at -1
        sys = models.double_integrator()
        times = np.array([0.0])
        from octrl.core import StateFeedbackController
        ctrl = StateFeedbackController(
            DiscreteTrajectory(times, [[0.0]], ZOH),
            DiscreteTrajectory(times, [[[-1.0, -2.0]]], ZOH),
            DiscreteTrajectory(times, [[0.0, 0.0]], ZOH))
        st_sim, _ = simulate_closed_loop(sys, ctrl, [1.0, 0.0], 0.0, 8.0,
                                         control_dt=0.01,
                                         settings=IntegratorSettings(dt=0.01))
        norms = np.linalg.norm(st_sim.values, axis=1)
        assert norms[-1] < 0.05 * norms[0]

    def test_zero_controller_at_equilibrium_constant(self):
        sys = models.pendulum()
        st_sim, _ = simulate_closed_loop(sys, ConstantController([0.0]),
                                         [0.0, 0.0], 0.0, 1.0, control_dt=0.1,
                                         settings=IntegratorSettings(dt=0.01))
        assert np.allclose(st_sim.values, 0.0)


def test_all_schemes_hit_both_endpoints():
    x0 = [1.0, 0.0]
    for scheme in (EULER, RK4, RK45, SYMPLECTIC_EULER):
        sys = models.oscillator().attach_controller(ConstantController([0.0]))
        settings = IntegratorSettings(scheme=scheme, dt=0.03)
        from octrl.integrate import integrate
        traj = integrate(sys, x0, 0.5, 1.7, settings)
        assert traj.timestamps[0] == 0.5
        assert traj.timestamps[-1] == 1.7
        assert np.array_equal(traj.values[0], np.array(x0))
