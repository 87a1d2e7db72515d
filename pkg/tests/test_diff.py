import numpy as np
import pytest

from octrl import diff, models
from octrl.core import ConstantController, LtiSystem
from octrl.dual import Dual, sin
from octrl.errors import ConfigurationError


def expm_series(M, tol=1e-300):
    """Truncated-Taylor matrix exponential, summed to machine precision."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ M / k
        out = out + term
        if np.max(np.abs(term)) < 1e-20:
            break
    return out


def expm_control_integral(A, B, dt):
    """integral_0^dt e^(A tau) B dtau via the Taylor series."""
    n = A.shape[0]
    term = dt * np.eye(n)
    out = term.copy()
    for k in range(1, 60):
        term = term @ (A * dt) / (k + 1)
        out = out + term
        if np.max(np.abs(term)) < 1e-20:
            break
    return out @ B


def random_stable(rng, n):
    M = rng.normal(size=(n, n))
    shift = max(np.real(np.linalg.eigvals(M))) + 0.5
    return M - shift * np.eye(n)


class TestDualArithmetic:
    def test_product_rule(self):
        x = Dual(3.0, np.array([1.0]))
        y = x * x
        assert y.val == 9.0 and y.eps[0] == 6.0

    def test_quotient_and_chain(self):
        x = Dual(2.0, np.array([1.0]))
        y = sin(x) / x
        expected = (2.0 * np.cos(2.0) - np.sin(2.0)) / 4.0
        assert abs(y.eps[0] - expected) < 1e-15

    def test_abs_subgradient_zero_at_zero(self):
        x = Dual(0.0, np.array([1.0]))
        assert abs(x).eps[0] == 0.0


class TestJacobianFd:
    def test_linear_map(self, rng):
        M = rng.normal(size=(3, 4))
        J = diff.jacobian_fd(lambda x: M @ x, rng.normal(size=4))
        assert np.max(np.abs(J - M)) < 1e-6

    def test_square(self):
        J = diff.jacobian_fd(lambda x: np.array([x[0] ** 2]), np.array([3.0]))
        assert abs(J[0, 0] - 6.0) < 1e-5

    def test_constant(self):
        J = diff.jacobian_fd(lambda x: np.array([2.0, -1.0]), np.zeros(3))
        assert np.max(np.abs(J)) < 1e-7


class TestJacobianAd:
    def test_linear_map(self, rng):
        M = rng.normal(size=(3, 4))
        J = diff.jacobian_ad(lambda x: M.dot(x), rng.normal(size=4))
        assert np.max(np.abs(J - M)) < 1e-14

    def test_pendulum_matches_analytic(self, rng):
        sys = models.pendulum()
        for _ in range(20):
            x = rng.normal(size=2)
            u = rng.normal(size=1)
            A_ref, B_ref = sys.analytic_jacobians(x, u, 0.0)
            lin = diff.linearize_system(sys, x, u, 0.0, method=diff.AD)
            assert np.max(np.abs(lin.A - A_ref)) < 1e-12
            assert np.max(np.abs(lin.B - B_ref)) < 1e-12

    def test_sin_at_zero(self):
        J = diff.jacobian_ad(lambda x: np.array([sin(x[0])]), np.array([0.0]))
        assert J[0, 0] == 1.0


class TestHessianAd:
    def test_quadratic_form(self, rng):
        Q = rng.normal(size=(3, 3))
        Q = 0.5 * (Q + Q.T)
        H = diff.hessian_ad(lambda x: 0.5 * x.dot(Q.dot(x)), rng.normal(size=3))
        assert np.max(np.abs(H - Q)) < 1e-12

    def test_hand_example(self):
        H = diff.hessian_ad(lambda x: x[0] ** 2 * x[1], np.array([1.0, 1.0]))
        assert np.allclose(H, [[2.0, 2.0], [2.0, 0.0]])

    def test_linear_is_zero(self):
        H = diff.hessian_ad(lambda x: 3.0 * x[0] - x[1], np.array([0.4, 1.2]))
        assert np.max(np.abs(H)) == 0.0

    def test_symmetry(self, rng):
        def f(z):
            return sin(z[0] * z[1]) * z[2] + z[0] ** 3 / (1.0 + z[2] * z[2])
        x = rng.normal(size=3)
        H_raw = diff.hessian_ad(f, x, symmetrize=False)
        assert np.max(np.abs(H_raw - H_raw.T)) < 1e-10
        H = diff.hessian_ad(f, x)
        assert np.array_equal(H, H.T)


class TestLinearize:
    def test_lti_exact(self, rng):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        sys = LtiSystem(A, B)
        lin_ad = diff.linearize_system(sys, rng.normal(size=3), rng.normal(size=2),
                                       0.0, method=diff.AD)
        assert np.array_equal(lin_ad.A, A) and np.array_equal(lin_ad.B, B)
        lin_fd = diff.linearize_system(sys, rng.normal(size=3), rng.normal(size=2),
                                       0.0, method=diff.FD)
        assert np.max(np.abs(lin_fd.A - A)) < 1e-6
        assert np.max(np.abs(lin_fd.B - B)) < 1e-6

    def test_pendulum_upright(self):
        # d(thetadd)/dtheta at theta=pi is +g/l, damping enters as -b/(m l^2)
        sys = models.pendulum(m=1.0, l=1.0, b=0.1, g=9.81)
        lin = diff.linearize_system(sys, np.array([np.pi, 0.0]), np.array([0.0]),
                                    0.0, method=diff.AD)
        assert np.allclose(lin.A, [[0.0, 1.0], [9.81, -0.1]], atol=1e-12)
        assert np.allclose(lin.B, [[0.0], [1.0]], atol=1e-12)

    def test_fd_vs_ad_quadrotor(self, rng):
        sys = models.planar_quadrotor()
        worst = 0.0
        for _ in range(100):
            x = rng.normal(size=6)
            u = rng.normal(size=2) + 3.0
            ad = diff.linearize_system(sys, x, u, 0.0, method=diff.AD)
            fd = diff.linearize_system(sys, x, u, 0.0, method=diff.FD)
            scale = 1.0 + np.max(np.abs(ad.A))
            worst = max(worst, np.max(np.abs(ad.A - fd.A)) / scale,
                        np.max(np.abs(ad.B - fd.B)) / scale)
        assert worst < 1e-5

    def test_analytic_method_dispatch(self):
        sys = models.pendulum()
        lin = diff.linearize_system(sys, np.array([0.3, 0.1]), np.array([0.2]),
                                    0.0, method=diff.ANALYTIC)
        A_ref, B_ref = sys.analytic_jacobians(np.array([0.3, 0.1]),
                                              np.array([0.2]), 0.0)
        assert np.array_equal(lin.A, A_ref) and np.array_equal(lin.B, B_ref)


class TestSensitivityApprox:
    def test_forward_euler_formula(self):
        lin = diff.LinearSystemMatrices(A=np.zeros((2, 2)), B=np.eye(2),
                                        x=np.zeros(2), u=np.zeros(2), t=0.0)
        sens = diff.sensitivity_approx(lin, 0.1, diff.FORWARD_EULER)
        assert np.array_equal(sens.A, np.eye(2))
        assert np.allclose(sens.B, 0.1 * np.eye(2))

    def test_tustin_scalar(self):
        lin = diff.LinearSystemMatrices(A=np.array([[-1.0]]), B=np.array([[1.0]]),
                                        x=np.zeros(1), u=np.zeros(1), t=0.0)
        sens = diff.sensitivity_approx(lin, 0.5, diff.TUSTIN)
        assert abs(sens.A[0, 0] - 0.6) < 1e-15

    def test_backward_euler_scalar(self):
        lin = diff.LinearSystemMatrices(A=np.array([[-1.0]]), B=np.array([[1.0]]),
                                        x=np.zeros(1), u=np.zeros(1), t=0.0)
        sens = diff.sensitivity_approx(lin, 0.5, diff.BACKWARD_EULER)
        assert abs(sens.A[0, 0] - 1.0 / 1.5) < 1e-15


class TestSensitivityIntegrate:
    def test_lti_matches_matrix_exponential(self, rng):
        for n in (2, 3, 5):
            A = random_stable(rng, n)
            B = rng.normal(size=(n, 2))
            sys = LtiSystem(A, B)
            dt = 0.05
            sens = diff.sensitivity_integrate(sys, np.zeros(n), np.zeros(2), 0.0,
                                              dt, substeps=4)
            assert np.max(np.abs(sens.A - expm_series(A * dt))) < 1e-8
            assert np.max(np.abs(sens.B - expm_control_integral(A, B, dt))) < 1e-8

    def test_small_dt_limit(self):
        sys = models.pendulum()
        sens = diff.sensitivity_integrate(sys, np.array([0.7, -0.3]),
                                          np.array([0.2]), 0.0, 1e-6)
        assert np.max(np.abs(sens.A - np.eye(2))) < 1e-5
        assert np.max(np.abs(sens.B)) < 1e-5

    def test_pendulum_matches_flow_map_fd(self):
        # independent oracle: finite differences of the integrated flow map
        from octrl.nloc import _rk4_interval
        sys = models.pendulum()
        x0 = np.array([0.4, -0.2])
        u0 = np.array([0.5])
        dt = 0.05
        sens = diff.sensitivity_integrate(sys, x0, u0, 0.0, dt, substeps=4)

        def flow(x, u):
            return _rk4_interval(sys, x, u, 0.0, dt, 4)

        h = 1e-6
        A_fd = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            A_fd[:, i] = (flow(x0 + e, u0) - flow(x0 - e, u0)) / (2 * h)
        B_fd = ((flow(x0, u0 + h) - flow(x0, u0 - h)) / (2 * h)).reshape(2, 1)
        assert np.max(np.abs(sens.A - A_fd)) < 1e-5
        assert np.max(np.abs(sens.B - B_fd)) < 1e-5


class TestInvariants:
    def test_ad_matches_fd_on_all_models(self, rng):
        for name in ("pendulum", "double_integrator", "oscillator",
                     "planar_quadrotor"):
            sys = models.by_name(name)
            for _ in range(100):
                x = rng.normal(size=sys.state_dim)
                u = rng.normal(size=sys.control_dim)
                ad = diff.linearize_system(sys, x, u, 0.0, method=diff.AD)
                fd = diff.linearize_system(sys, x, u, 0.0, method=diff.FD)
                scale = 1.0 + np.max(np.abs(ad.A))
                assert np.max(np.abs(ad.A - fd.A)) / scale < 1e-4
                assert np.max(np.abs(ad.B - fd.B)) / (1.0 + np.max(np.abs(ad.B))) < 1e-4

    def test_forward_euler_error_is_second_order(self, rng):
        # error vs the exactly integrated sensitivity drops ~4x per dt halving
        A = random_stable(rng, 3)
        B = rng.normal(size=(3, 1))
        sys = LtiSystem(A, B)
        lin = diff.linearize_system(sys, np.zeros(3), np.zeros(1), 0.0)
        errs = []
        for dt in (0.08, 0.04):
            fe = diff.sensitivity_approx(lin, dt, diff.FORWARD_EULER)
            errs.append(np.max(np.abs(fe.A - expm_series(A * dt))))
        assert 2.5 <= errs[0] / errs[1] <= 6.0

    def test_tustin_stable_for_hurwitz(self, rng):
        for _ in range(25):
            A = random_stable(rng, 4)
            lin = diff.LinearSystemMatrices(A=A, B=np.zeros((4, 1)),
                                            x=np.zeros(4), u=np.zeros(1), t=0.0)
            for dt in (0.01, 0.1, 1.0, 10.0):
                sens = diff.sensitivity_approx(lin, dt, diff.TUSTIN)
                assert np.max(np.abs(np.linalg.eigvals(sens.A))) < 1.0


def test_unknown_methods_rejected():
    sys = models.pendulum()
    with pytest.raises(ConfigurationError):
        diff.linearize_system(sys, np.zeros(2), np.zeros(1), 0.0, method="nope")
    lin = diff.linearize_system(sys, np.zeros(2), np.zeros(1), 0.0)
    with pytest.raises(ConfigurationError):
        diff.sensitivity_approx(lin, 0.1, "nope")
