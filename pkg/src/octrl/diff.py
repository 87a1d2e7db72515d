"""Jacobians and Hessians by finite differences and forward-mode AD,
system linearization, and discrete-time sensitivities.

Forward mode seeds the full identity basis in one pass: every input
coordinate gets a unit derivative direction and one function evaluation
yields the whole Jacobian. Hessians nest duals inside duals. Finite
differences use forward differences with per-coordinate steps
``sqrt(eps) * (1 + |x_i|)``; they are the fast-but-rough fallback, AD is
exact to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .dual import Dual
from .errors import ConfigurationError, NumericalFault, SingularityFault

FD = "fd"
AD = "ad"
ANALYTIC = "analytic"

FORWARD_EULER = "forward_euler"
BACKWARD_EULER = "backward_euler"
TUSTIN = "tustin"
EXACT_INTEGRATED = "exact_integrated"

_SQRT_EPS = np.sqrt(np.finfo(float).eps)


@dataclass
class LinearSystemMatrices:
    """Continuous-time Jacobian pair (A, B) at a linearization point."""

    A: np.ndarray
    B: np.ndarray
    x: np.ndarray
    u: np.ndarray
    t: float


@dataclass
class DiscreteSensitivities:
    """One-interval discrete-time Jacobian pair (A_n, B_n)."""

    A: np.ndarray
    B: np.ndarray
    dt: float
    method: str


def jacobian_fd(f, x, h=None):
    """Forward-difference Jacobian of a vector function at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(f0)):
        raise NumericalFault("function value non-finite at base point")
    J = np.empty((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        hi = h if h is not None else _SQRT_EPS * (1.0 + abs(x[i]))
        xp = x.copy()
        xp[i] += hi
        fi = np.asarray(f(xp), dtype=float)
        if not np.all(np.isfinite(fi)):
            raise NumericalFault(f"function value non-finite at perturbed coordinate {i}",
                                 index=i)
        J[:, i] = (fi - f0) / hi
    return J


def _seed_point(x):
    n = len(x)
    out = np.empty(n, dtype=object)
    for i in range(n):
        out[i] = dual.seed(x[i], i, n)
    return out


def jacobian_ad(f, x):
    """Exact-to-roundoff Jacobian via one forward-mode pass."""
    x = np.asarray(x)
    n = x.shape[0]
    y = np.atleast_1d(f(_seed_point(x)))
    J = np.empty((y.shape[0], n))
    for j, yj in enumerate(y):
        J[j, :] = dual.derivatives(yj, n)
    return J


def gradient_ad(f, x):
    """Gradient of a scalar function via forward-mode AD."""
    x = np.asarray(x)
    n = x.shape[0]
    y = f(_seed_point(x))
    return np.asarray(dual.derivatives(y, n), dtype=float).copy()


def hessian_ad(f, x, symmetrize=True):
    """Hessian of a scalar function by nesting duals (forward-over-forward)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    outer = _seed_point(x)          # outer duals: d/dx_i
    inner = _seed_point(outer)      # inner duals over outer duals: d/dx_j
    y = f(inner)
    H = np.zeros((n, n))
    if isinstance(y, Dual):
        for j, gj in enumerate(y.eps):
            if isinstance(gj, Dual):
                H[:, j] = gj.eps
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def linearize_system(sys, x, u, t, method=AD):
    """Jacobians A = df/dx, B = df/du of a controlled system at (x, u, t)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[0] != sys.state_dim or u.shape[0] != sys.control_dim:
        raise ConfigurationError("linearize_system: dimension mismatch")
    n, m = sys.state_dim, sys.control_dim
    if method == ANALYTIC:
        if not hasattr(sys, "analytic_jacobians"):
            raise ConfigurationError("system provides no analytic Jacobians")
        A, B = sys.analytic_jacobians(x, u, t)
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
    elif method == AD:
        z = np.concatenate([x, u])
        J = jacobian_ad(lambda zz: sys.rhs(zz[:n], zz[n:], t), z)
        A, B = J[:, :n], J[:, n:]
    elif method == FD:
        A = jacobian_fd(lambda xx: sys.rhs(xx, u, t), x)
        B = jacobian_fd(lambda uu: sys.rhs(x, uu, t), u)
    else:
        raise ConfigurationError(f"unknown linearization method {method!r}")
    return LinearSystemMatrices(A=A, B=B, x=x.copy(), u=u.copy(), t=float(t))


def sensitivity_approx(lin, dt, method=FORWARD_EULER):
    """Low-order discretization of continuous Jacobians over one step.

    forward_euler:  A_n = I + dt A,            B_n = dt B
    backward_euler: A_n = (I - dt A)^-1,       B_n = A_n dt B
    tustin:         A_n = (I - dt/2 A)^-1 (I + dt/2 A),
                    B_n = (I - dt/2 A)^-1 dt B
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    A, B = lin.A, lin.B
    eye = np.eye(A.shape[0])
    if method == FORWARD_EULER:
        An = eye + dt * A
        Bn = dt * B
    elif method == BACKWARD_EULER:
        An = _solve(eye - dt * A, eye, method)
        Bn = An.dot(dt * B)
    elif method == TUSTIN:
        M = eye - 0.5 * dt * A
        An = _solve(M, eye + 0.5 * dt * A, method)
        Bn = _solve(M, dt * B, method)
    else:
        raise ConfigurationError(f"unknown sensitivity method {method!r}")
    return DiscreteSensitivities(A=An, B=Bn, dt=float(dt), method=method)


def _solve(M, rhs, method):
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularityFault(f"{method} discretization solve is singular: {exc}")


def sensitivity_integrate(sys, x, u, t, dt, substeps=1, lin_method=AD):
    """Exact sensitivities by integrating the variational ODEs with RK4.

    Propagates  dS_A/dtau = A(tau) S_A  from S_A = I  and
                dS_B/dtau = A(tau) S_B + B(tau)  from S_B = 0
    alongside the state over [t, t+dt] with the control held constant.
    The same RK4 stepping as the state integration makes the result the
    exact Jacobian of the discrete flow map for linear systems.
    """
    if dt <= 0 or substeps < 1:
        raise ConfigurationError("dt must be positive and substeps >= 1")
    n, m = sys.state_dim, sys.control_dim
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    SA = np.eye(n)
    SB = np.zeros((n, m))
    h = dt / substeps
    tau = float(t)

    def deriv(xk, SAk, SBk, tk):
        lin = linearize_system(sys, xk, u, tk, method=lin_method)
        fx = np.asarray(sys.rhs(xk, u, tk), dtype=float)
        return fx, lin.A.dot(SAk), lin.A.dot(SBk) + lin.B

    for _ in range(substeps):
        k1x, k1A, k1B = deriv(x, SA, SB, tau)
        k2x, k2A, k2B = deriv(x + 0.5 * h * k1x, SA + 0.5 * h * k1A, SB + 0.5 * h * k1B,
                              tau + 0.5 * h)
        k3x, k3A, k3B = deriv(x + 0.5 * h * k2x, SA + 0.5 * h * k2A, SB + 0.5 * h * k2B,
                              tau + 0.5 * h)
        k4x, k4A, k4B = deriv(x + h * k3x, SA + h * k3A, SB + h * k3B, tau + h)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        SA = SA + (h / 6.0) * (k1A + 2.0 * k2A + 2.0 * k3A + k4A)
        SB = SB + (h / 6.0) * (k1B + 2.0 * k2B + 2.0 * k3B + k4B)
        tau += h
    return DiscreteSensitivities(A=SA, B=SB, dt=float(dt), method=EXACT_INTEGRATED)
