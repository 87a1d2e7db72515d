"""Numerical integration: fixed-step Euler/RK4, adaptive Dormand-Prince 5(4),
semi-implicit (symplectic) Euler, and an offline closed-loop simulator.

All integrators return trajectories that start exactly at (t0, x0) and land
exactly on t1; a final partial step is shortened rather than overshooting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (ConstantController, ControlledSystem, DiscreteTrajectory,
                   DynamicalSystem, LINEAR, ZOH, as_vector)
from .errors import ConfigurationError, NumericalFault, StiffnessFault

EULER = "euler"
RK4 = "rk4"
RK45 = "rk45"
SYMPLECTIC_EULER = "symplectic_euler"

SCHEMES = (EULER, RK4, RK45, SYMPLECTIC_EULER)


@dataclass
class IntegratorSettings:
    scheme: str = RK4
    dt: float = 0.01
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown integrator scheme {self.scheme!r}")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")


class SymplecticSystem(ControlledSystem):
    """Controlled system with a position/velocity split  pdot = v,
    vdot = acceleration(p, v, u, t)."""

    def __init__(self, position_dim, velocity_dim, control_dim, controller=None):
        if position_dim != velocity_dim:
            raise ConfigurationError("position/velocity split must be balanced")
        super().__init__(position_dim + velocity_dim, control_dim, controller)
        self.position_dim = int(position_dim)
        self.velocity_dim = int(velocity_dim)

    def acceleration(self, p, v, u, t):
        raise NotImplementedError

    def rhs(self, x, u, t):
        np_ = self.position_dim
        p, v = x[:np_], x[np_:]
        a = self.acceleration(p, v, u, t)
        if isinstance(v, np.ndarray) and (v.dtype == object or
                                          (hasattr(a, "dtype") and a.dtype == object)):
            out = np.empty(self.state_dim, dtype=object)
        else:
            out = np.empty(self.state_dim)
        out[:np_] = v
        out[np_:] = a
        return out


def _ode_rhs(sys):
    """Autonomous view of a system: attached-controller closed loop for
    controlled systems, plain rhs otherwise."""
    if isinstance(sys, ControlledSystem):
        if sys.controller is None:
            raise ConfigurationError(
                "controlled system has no attached controller; attach one or "
                "use simulate_closed_loop")
        return sys.closed_loop_rhs
    if isinstance(sys, DynamicalSystem):
        return sys.rhs
    raise ConfigurationError(f"cannot integrate object of type {type(sys).__name__}")


def _check_span(t0, t1):
    if not t1 > t0:
        raise ConfigurationError("t1 must be greater than t0")


def _euler_step(f, x, t, h):
    return x + h * np.asarray(f(x, t), dtype=float)


def _rk4_step(f, x, t, h):
    k1 = np.asarray(f(x, t), dtype=float)
    k2 = np.asarray(f(x + 0.5 * h * k1, t + 0.5 * h), dtype=float)
    k3 = np.asarray(f(x + 0.5 * h * k2, t + 0.5 * h), dtype=float)
    k4 = np.asarray(f(x + h * k3, t + h), dtype=float)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed(sys, x0, t0, t1, settings):
    """Fixed-step integration (scheme euler or rk4)."""
    _check_span(t0, t1)
    f = _ode_rhs(sys)
    x = as_vector(x0, getattr(sys, "state_dim", None), "x0").copy()
    span = t1 - t0
    n_full = int(np.ceil(span / settings.dt - 1e-12))
    if n_full > settings.max_steps:
        raise ConfigurationError(
            f"{n_full} steps exceed max_steps={settings.max_steps}")
    step = _euler_step if settings.scheme == EULER else _rk4_step
    times = [t0]
    states = [x.copy()]
    t = t0
    for k in range(n_full):
        last = k == n_full - 1
        h = (t1 - t) if last else settings.dt
        x = step(f, x, t, h)
        t = t1 if last else t + settings.dt
        if not np.all(np.isfinite(x)):
            raise NumericalFault(f"non-finite state at t={t}", time=t)
        times.append(t)
        states.append(x.copy())
    return DiscreteTrajectory(times, states, interpolation=LINEAR)


# Dormand-Prince 5(4) tableau; 5th-order solution propagates, the embedded
# 4th-order difference gives the error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
                  22 / 525, -1 / 40])


def integrate_adaptive(sys, x0, t0, t1, settings):
    """Error-controlled Dormand-Prince 5(4) integration.

    Accepts a step when max_i |e_i| / (abs_tol + rel_tol |x_i|) <= 1 and
    rescales the step by 0.9 * err^(-1/5), clamped to [0.2, 5].
    """
    _check_span(t0, t1)
    f = _ode_rhs(sys)
    x = as_vector(x0, getattr(sys, "state_dim", None), "x0").copy()
    span = t1 - t0
    h = min(settings.dt, span)
    times = [t0]
    states = [x.copy()]
    t = t0
    attempts = 0
    while t < t1:
        if attempts >= settings.max_steps:
            raise StiffnessFault(f"step budget {settings.max_steps} exhausted at t={t}")
        if h < 1e-12 * span:
            raise StiffnessFault(f"step size underflow at t={t}")
        last = h >= (t1 - t)
        if last:
            h = t1 - t
        k = np.empty((7, x.shape[0]))
        for i in range(7):
            xi = x if i == 0 else x + h * np.dot(_DP_A[i], k[:i])
            k[i] = f(xi, t + _DP_C[i] * h)
        x_new = x + h * _DP_B5.dot(k)
        err = h * _DP_E.dot(k)
        if not np.all(np.isfinite(x_new)):
            h *= 0.2
            attempts += 1
            continue
        scale = settings.abs_tol + settings.rel_tol * np.abs(x)
        err_norm = float(np.max(np.abs(err) / scale))
        attempts += 1
        if err_norm <= 1.0:
            t = t1 if last else t + h
            x = x_new
            times.append(t)
            states.append(x.copy())
        factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
        h *= factor
    return DiscreteTrajectory(times, states, interpolation=LINEAR)


def integrate_symplectic(sys, x0, t0, t1, settings):
    """Semi-implicit Euler:  v+ = v + h a(p, v, u, t);  p+ = p + h v+."""
    _check_span(t0, t1)
    if not isinstance(sys, SymplecticSystem):
        raise ConfigurationError("integrate_symplectic needs a SymplecticSystem")
    if sys.controller is None:
        raise ConfigurationError("controlled system has no attached controller")
    x = as_vector(x0, sys.state_dim, "x0").copy()
    nd = sys.position_dim
    span = t1 - t0
    n_full = int(np.ceil(span / settings.dt - 1e-12))
    if n_full > settings.max_steps:
        raise ConfigurationError(
            f"{n_full} steps exceed max_steps={settings.max_steps}")
    times = [t0]
    states = [x.copy()]
    t = t0
    for kstep in range(n_full):
        last = kstep == n_full - 1
        h = (t1 - t) if last else settings.dt
        u = sys.controller.compute(x, t)
        p, v = x[:nd], x[nd:]
        v_new = v + h * np.asarray(sys.acceleration(p, v, u, t), dtype=float)
        p_new = p + h * v_new
        x = np.concatenate([p_new, v_new])
        t = t1 if last else t + settings.dt
        if not np.all(np.isfinite(x)):
            raise NumericalFault(f"non-finite state at t={t}", time=t)
        times.append(t)
        states.append(x.copy())
    return DiscreteTrajectory(times, states, interpolation=LINEAR)


def integrate(sys, x0, t0, t1, settings):
    """Dispatch on ``settings.scheme``."""
    if settings.scheme == RK45:
        return integrate_adaptive(sys, x0, t0, t1, settings)
    if settings.scheme == SYMPLECTIC_EULER:
        return integrate_symplectic(sys, x0, t0, t1, settings)
    return integrate_fixed(sys, x0, t0, t1, settings)


class _HeldControl(DynamicalSystem):
    """Open-loop view of a controlled system with the control held fixed."""

    def __init__(self, sys, u):
        super().__init__(sys.state_dim)
        self._sys = sys
        self._u = u

    def rhs(self, x, t):
        return self._sys.rhs(x, self._u, t)


class _HeldControlSymplectic(SymplecticSystem):
    """Symplectic view with the control held fixed (for ZOH simulation)."""

    def __init__(self, sys, u):
        super().__init__(sys.position_dim, sys.velocity_dim, sys.control_dim)
        self._sys = sys
        self.attach_controller(ConstantController(u))

    def acceleration(self, p, v, u, t):
        return self._sys.acceleration(p, v, u, t)

    def rhs(self, x, u, t):
        return self._sys.rhs(x, u, t)


def simulate_closed_loop(sys, controller, x0, t0, t1, control_dt, settings):
    """Simulate a control loop: the control is recomputed every ``control_dt``
    and held (ZOH) while the state is integrated with the chosen scheme.

    Returns (state trajectory, control trajectory). Offline and sequential;
    wall-clock synchronization is out of scope.
    """
    _check_span(t0, t1)
    if control_dt < settings.dt and settings.scheme != RK45:
        raise ConfigurationError("control_dt must be >= integrator dt")
    if controller.control_dim != sys.control_dim:
        raise ConfigurationError("controller/system control dimension mismatch")
    x = as_vector(x0, sys.state_dim, "x0").copy()
    n_updates = int(np.ceil((t1 - t0) / control_dt - 1e-12))
    times = [t0]
    states = [x.copy()]
    u_times = []
    u_values = []
    t = t0
    for k in range(n_updates):
        t_next = t1 if k == n_updates - 1 else t0 + (k + 1) * control_dt
        u = controller.compute(x, t)
        u_times.append(t)
        u_values.append(np.asarray(u, dtype=float))
        if settings.scheme == SYMPLECTIC_EULER:
            held = _HeldControlSymplectic(sys, u)
        else:
            held = _HeldControl(sys, u)
        seg = integrate(held, x, t, t_next, settings)
        times.extend(seg.timestamps[1:].tolist())
        states.extend(list(seg.values[1:]))
        x = seg.values[-1].copy()
        t = t_next
    state_traj = DiscreteTrajectory(times, states, interpolation=LINEAR)
    control_traj = DiscreteTrajectory(u_times, u_values, interpolation=ZOH)
    return state_traj, control_traj
