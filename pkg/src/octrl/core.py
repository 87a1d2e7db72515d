"""Fundamental vocabulary: states, controls, trajectories, systems, controllers.

States and controls are plain 1-D ``float64`` numpy arrays. Their dimensions
are per-problem constants checked when containers (systems, controllers,
problems) are constructed, not on every call. All containers are immutable
after construction except the PID controller's integral state.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, NumericalFault

ZOH = "zoh"
LINEAR = "linear"


def as_vector(x, dim=None, name="vector"):
    """Coerce to a 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ConfigurationError(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ConfigurationError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    return v


def require_finite(v, name="vector", time=None):
    """Raise NumericalFault naming the first non-finite entry, if any."""
    finite = np.isfinite(v)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise NumericalFault(f"{name} has non-finite entry at index {idx}", index=idx, time=time)
    return v


class DiscreteTrajectory:
    """Time-stamped series of values with an interpolation strategy.

    ``values`` are stacked along axis 0; entries may be vectors or matrices
    (gain sequences). Timestamps must be strictly increasing. Lookups before
    the first or after the last timestamp edge-hold the boundary value.
    """

    def __init__(self, timestamps, values, interpolation=ZOH):
        ts = np.asarray(timestamps, dtype=float)
        vals = np.asarray(values, dtype=float)
        if ts.ndim != 1 or ts.size == 0:
            raise ConfigurationError("trajectory needs at least one timestamp")
        if vals.shape[0] != ts.shape[0]:
            raise ConfigurationError(
                f"got {ts.shape[0]} timestamps but {vals.shape[0]} values")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ConfigurationError("timestamps must be strictly increasing")
        if interpolation not in (ZOH, LINEAR):
            raise ConfigurationError(f"unknown interpolation mode {interpolation!r}")
        self.timestamps = ts
        self.values = vals
        self.interpolation = interpolation

    def __len__(self):
        return self.timestamps.shape[0]

    @property
    def start_time(self):
        return float(self.timestamps[0])

    @property
    def end_time(self):
        return float(self.timestamps[-1])

    def value_at(self, t):
        return self.value_at_info(t)[0]

    def value_at_info(self, t):
        """Return (value, extrapolated). Edge-hold outside the time range."""
        ts = self.timestamps
        if t <= ts[0]:
            return self.values[0].copy(), t < ts[0]
        if t >= ts[-1]:
            return self.values[-1].copy(), t > ts[-1]
        # rightmost index with ts[i] <= t
        i = int(np.searchsorted(ts, t, side="right")) - 1
        if self.interpolation == ZOH or ts[i] == t:
            return self.values[i].copy(), False
        frac = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - frac) * self.values[i] + frac * self.values[i + 1], False


# States and controls share the container; the aliases keep signatures readable.
StateTrajectory = DiscreteTrajectory
ControlTrajectory = DiscreteTrajectory


def interpolate(traj, t):
    """Value of a trajectory at time ``t`` (total function, edge-hold)."""
    return traj.value_at(t)


class DynamicalSystem:
    """Autonomous continuous-time system  xdot = f(x, t)."""

    def __init__(self, state_dim):
        if state_dim < 1:
            raise ConfigurationError("state_dim must be >= 1")
        self.state_dim = int(state_dim)

    def rhs(self, x, t):
        raise NotImplementedError


class FunctionSystem(DynamicalSystem):
    """Autonomous system from a plain callable f(x, t)."""

    def __init__(self, f, state_dim):
        super().__init__(state_dim)
        self._f = f

    def rhs(self, x, t):
        return self._f(x, t)


class ControlledSystem:
    """Controlled continuous-time system  xdot = f(x, u, t).

    A controller may be attached once (configuration time) to close the
    loop; closed-loop evaluation without one is an error.
    """

    def __init__(self, state_dim, control_dim, controller=None):
        if state_dim < 1 or control_dim < 1:
            raise ConfigurationError("state_dim and control_dim must be >= 1")
        self.state_dim = int(state_dim)
        self.control_dim = int(control_dim)
        self.controller = controller

    def rhs(self, x, u, t):
        raise NotImplementedError

    def attach_controller(self, controller):
        if controller.control_dim != self.control_dim:
            raise ConfigurationError(
                f"controller output dim {controller.control_dim} != system control dim {self.control_dim}")
        self.controller = controller
        return self

    def closed_loop_rhs(self, x, t):
        if self.controller is None:
            raise ConfigurationError("no controller attached for closed-loop evaluation")
        return self.rhs(x, self.controller.compute(x, t), t)


class FunctionControlledSystem(ControlledSystem):
    """Controlled system from a plain callable f(x, u, t)."""

    def __init__(self, f, state_dim, control_dim):
        super().__init__(state_dim, control_dim)
        self._f = f

    def rhs(self, x, u, t):
        return self._f(x, u, t)


class LtiSystem(ControlledSystem):
    """Linear time-invariant system  xdot = A x + B u."""

    def __init__(self, A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ConfigurationError("B rows must match A")
        super().__init__(A.shape[0], B.shape[1])
        self.A = A
        self.B = B

    def rhs(self, x, u, t):
        return self.A.dot(x) + self.B.dot(u)

    def analytic_jacobians(self, x, u, t):
        return self.A.copy(), self.B.copy()


def evaluate_dynamics(sys, x, u, t):
    """Open-loop right-hand side with dimension and finiteness checks."""
    x = as_vector(x, sys.state_dim, "state")
    u = as_vector(u, sys.control_dim, "control")
    dx = np.asarray(sys.rhs(x, u, t), dtype=float)
    if dx.shape != (sys.state_dim,):
        raise ConfigurationError(
            f"rhs returned shape {dx.shape}, expected ({sys.state_dim},)")
    return require_finite(dx, "state derivative", time=t)


def compute_control(ctrl, x, t):
    """Evaluate a controller policy u(x, t)."""
    return ctrl.compute(x, t)


def closed_loop_rhs(sys, x, t):
    """Closed-loop right-hand side using the attached controller."""
    if sys.controller is None:
        raise ConfigurationError("no controller attached for closed-loop evaluation")
    return evaluate_dynamics(sys, x, sys.controller.compute(x, t), t)


class Controller:
    """Base control law  u = policy(x, t)."""

    def __init__(self, control_dim):
        if control_dim < 1:
            raise ConfigurationError("control_dim must be >= 1")
        self.control_dim = int(control_dim)

    def compute(self, x, t):
        raise NotImplementedError


class ConstantController(Controller):
    """Fixed control input, independent of state and time."""

    def __init__(self, u):
        u = as_vector(u, name="constant control")
        super().__init__(u.shape[0])
        self.u = u

    def compute(self, x, t):
        return self.u.copy()


class StateFeedbackController(Controller):
    """Time-varying affine law  u(x, t) = u_ff(t) + K(t) (x - x_ref(t)).

    The three series share timestamps; outside the stamped horizon the
    boundary stage is edge-held and flagged via :meth:`compute_info`.
    """

    def __init__(self, u_ff, gains, x_ref):
        if not (len(u_ff) == len(gains) == len(x_ref)):
            raise ConfigurationError("u_ff, gains and x_ref must share timestamps")
        if not (np.array_equal(u_ff.timestamps, gains.timestamps)
                and np.array_equal(u_ff.timestamps, x_ref.timestamps)):
            raise ConfigurationError("u_ff, gains and x_ref must share timestamps")
        m = u_ff.values.shape[1]
        n = x_ref.values.shape[1]
        if gains.values.shape[1:] != (m, n):
            raise ConfigurationError(
                f"gain shape {gains.values.shape[1:]} inconsistent with dims ({m}, {n})")
        super().__init__(m)
        self.u_ff = u_ff
        self.gains = gains
        self.x_ref = x_ref

    @property
    def start_time(self):
        return self.u_ff.start_time

    @property
    def end_time(self):
        return self.u_ff.end_time

    def compute(self, x, t):
        return self.compute_info(x, t)[0]

    def compute_info(self, x, t):
        """Return (u, extrapolated) where extrapolated marks edge-hold in t."""
        uff, ex1 = self.u_ff.value_at_info(t)
        K, ex2 = self.gains.value_at_info(t)
        xref, ex3 = self.x_ref.value_at_info(t)
        return uff + K.dot(np.asarray(x, dtype=float) - xref), ex1 or ex2 or ex3


class PIDController(Controller):
    """Per-channel PID law on the leading state entries.

    The error of channel k is ``setpoint_k(t) - x_k``; the derivative term
    uses a backward difference over the time elapsed between calls, and the
    integral state is clamped to ``integral_limit`` (anti-windup). The
    integral/derivative memory makes this the one stateful controller; keep
    an instance on a single thread.
    """

    def __init__(self, kp, ki, kd, setpoint, integral_limit=np.inf):
        kp = as_vector(kp, name="kp")
        ki = as_vector(ki, kp.shape[0], "ki")
        kd = as_vector(kd, kp.shape[0], "kd")
        super().__init__(kp.shape[0])
        self.kp, self.ki, self.kd = kp, ki, kd
        if not isinstance(setpoint, DiscreteTrajectory):
            setpoint = as_vector(setpoint, kp.shape[0], "setpoint")
        self.setpoint = setpoint
        self.integral_limit = float(integral_limit)
        if self.integral_limit <= 0:
            raise ConfigurationError("integral_limit must be positive")
        self.reset()

    def reset(self):
        self.integral_state = np.zeros(self.control_dim)
        self._last_error = None
        self._last_t = None

    def _setpoint_at(self, t):
        if isinstance(self.setpoint, DiscreteTrajectory):
            return self.setpoint.value_at(t)
        return self.setpoint

    def compute(self, x, t):
        x = np.asarray(x, dtype=float)
        e = self._setpoint_at(t) - x[: self.control_dim]
        de = np.zeros(self.control_dim)
        if self._last_t is not None:
            dt = t - self._last_t
            if dt > 0:
                self.integral_state = np.clip(
                    self.integral_state + e * dt,
                    -self.integral_limit, self.integral_limit)
                de = (e - self._last_error) / dt
        self._last_error = e
        self._last_t = t
        return self.kp * e + self.ki * self.integral_state + self.kd * de
