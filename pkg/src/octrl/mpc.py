"""Receding-horizon NMPC wrapper around the shooting solvers.

Each control step shifts the previous solution in time as a warm start
(linear interpolation for states, ZOH for controls, edge-held tails),
optionally pre-integrates the measured state across the expected solve
latency under the previous policy, updates the horizon, and runs a fixed
number of solver iterations (one for real-time iteration schemes).

The closed-loop harness runs in virtual time: solve durations are recorded
for reporting but never influence the simulated timeline, so runs are
deterministic.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import DiscreteTrajectory, LINEAR, ZOH, as_vector
from .errors import ConfigurationError, OctrlError, ValidationError
from .nloc import NLOCSettings, OptConProblem, _rk4_interval, solve

RECEDING = "receding"
FIXED_END_TIME = "fixed_end_time"


@dataclass
class MpcSettings:
    horizon_mode: str = RECEDING
    end_time: float | None = None      # required for fixed_end_time mode
    min_horizon: float = 0.1
    delay_estimate: float = 0.0
    iterations_per_step: int = 1
    warm_start: bool = True

    def __post_init__(self):
        if self.horizon_mode not in (RECEDING, FIXED_END_TIME):
            raise ConfigurationError(f"unknown horizon mode {self.horizon_mode!r}")
        if self.horizon_mode == FIXED_END_TIME and self.end_time is None:
            raise ConfigurationError("fixed_end_time mode needs end_time")
        if self.min_horizon <= 0:
            raise ConfigurationError("min_horizon must be positive")
        if self.delay_estimate < 0:
            raise ConfigurationError("delay_estimate must be >= 0")
        if self.iterations_per_step < 1:
            raise ConfigurationError("iterations_per_step must be >= 1")


@dataclass
class MpcState:
    last_solution: object = None
    last_time: float = None
    step_count: int = 0


@dataclass
class MpcStepInfo:
    step: int
    t: float
    cost: float
    defect_norm: float
    solve_seconds: float
    alpha: float
    degraded: bool = False


class Mpc:
    """Stateful NMPC loop driver; one instance per control loop."""

    def __init__(self, problem, solver_settings, mpc_settings):
        self.problem = problem
        self.solver_settings = solver_settings
        self.settings = mpc_settings
        self.state = MpcState()
        self.step_log = []

    @property
    def initialized(self):
        return self.state.last_solution is not None

    def initialize(self, x0=None, t0=None):
        """First full solve (cold start) anchoring the warm-start chain."""
        x0 = self.problem.x0 if x0 is None else as_vector(
            x0, self.problem.system.state_dim, "x0")
        t0 = self.problem.t0 if t0 is None else float(t0)
        T = self._horizon_at(t0)
        prob = replace(self.problem, x0=x0, T=T, t0=t0)
        sol = solve(prob, self.solver_settings)
        self.state = MpcState(last_solution=sol, last_time=t0, step_count=0)
        return sol

    def _horizon_at(self, t):
        if self.settings.horizon_mode == RECEDING:
            return self.problem.T
        return max(self.settings.min_horizon, self.settings.end_time - t)

    def _shifted_guess(self, grid_times, x_handoff):
        """Sample the previous solution on the new grid: ZOH controls,
        linearly interpolated states, edge-held tails."""
        prev = self.state.last_solution
        us = np.array([prev.u_traj.value_at(t) for t in grid_times[:-1]])
        xs = np.array([prev.x_traj.value_at(t) for t in grid_times])
        xs[0] = x_handoff
        return us, xs

    def mpc_step(self, x_measured, t_now):
        """One MPC update; returns the policy valid from t_now + delay."""
        if not self.initialized:
            raise ConfigurationError("call initialize() before mpc_step()")
        if t_now < self.state.last_time:
            raise ConfigurationError("mpc_step called with non-advancing time")
        x_measured = as_vector(x_measured, self.problem.system.state_dim, "x")
        t_handoff = t_now + self.settings.delay_estimate
        x_handoff = x_measured
        if self.settings.delay_estimate > 0:
            x_handoff = self._preintegrate(x_measured, t_now, t_handoff)
        T = self._horizon_at(t_handoff)
        dt = T / self.solver_settings.N
        grid = t_handoff + dt * np.arange(self.solver_settings.N + 1)
        guess = self._shifted_guess(grid, x_handoff) if self.settings.warm_start else None
        prob = replace(self.problem, x0=x_handoff, T=T, t0=t_handoff)
        step_settings = replace(self.solver_settings,
                                max_iterations=self.settings.iterations_per_step)
        tic = time.perf_counter()
        degraded = False
        try:
            sol = solve(prob, step_settings, initial_guess=guess)
            if sol.status == "line_search_failed" and not sol.accepted_iterations:
                # keep the previous policy alive rather than a stalled one
                degraded = True
        except OctrlError:
            sol = None
            degraded = True
        solve_seconds = time.perf_counter() - tic
        if sol is not None and not degraded:
            self.state.last_solution = sol
        else:
            sol = self.state.last_solution
        self.state.last_time = t_now
        self.state.step_count += 1
        last_alpha = (sol.iterations[-1].alpha
                      if sol.iterations and sol.iterations[-1].accepted else 0.0)
        self.step_log.append(MpcStepInfo(
            step=self.state.step_count, t=t_now, cost=sol.cost,
            defect_norm=sol.defect_norm, solve_seconds=solve_seconds,
            alpha=last_alpha, degraded=degraded))
        return self.state.last_solution.policy

    def _preintegrate(self, x, t_from, t_to):
        """Predict the handoff state under the previous policy (RK4 at the
        solver discretization)."""
        policy = self.state.last_solution.policy
        sys = self.problem.system
        dt_solver = self.problem.T / self.solver_settings.N
        span = t_to - t_from
        steps = max(1, int(np.ceil(span / dt_solver - 1e-12)))
        h = span / steps
        t = t_from
        for _ in range(steps):
            u = policy.compute(x, t)
            x = _rk4_interval(sys, x, u, t, h, 1)
            t += h
        return x


def run_closed_loop(mpc, plant, x0, t0, t_end, control_dt,
                    disturbance=None, plant_substeps=10):
    """Alternate mpc_step and plant integration over a virtual timeline.

    ``disturbance``, when given, is an (n_steps, state_dim) array of
    additive state offsets applied at the end of each control period.
    Returns (state trajectory, control trajectory, per-step infos).
    """
    if control_dt <= 0:
        raise ConfigurationError("control_dt must be positive")
    if mpc.settings.delay_estimate > control_dt:
        raise ConfigurationError("delay_estimate must not exceed control_dt")
    x = as_vector(x0, plant.state_dim, "x0")
    n_steps = int(round((t_end - t0) / control_dt))
    if n_steps < 1:
        raise ConfigurationError("t_end must allow at least one control step")
    if disturbance is not None:
        disturbance = np.asarray(disturbance, dtype=float)
        if disturbance.shape != (n_steps, plant.state_dim):
            raise ValidationError(
                f"disturbance shape {disturbance.shape} does not match "
                f"({n_steps}, {plant.state_dim})")
    if not mpc.initialized:
        mpc.initialize(x, t0)
    times = [t0]
    states = [x.copy()]
    u_times, u_values = [], []
    infos = []
    prev_policy = mpc.state.last_solution.policy
    delay = mpc.settings.delay_estimate
    for k in range(n_steps):
        t = t0 + k * control_dt
        t_next = t0 + (k + 1) * control_dt
        policy = mpc.mpc_step(x, t)
        infos.append(mpc.step_log[-1])
        # until the new policy takes over, the previous one keeps running
        if delay > 0:
            x = _apply_policy(plant, prev_policy, x, t, t + delay, plant_substeps)
        u_times.append(t)
        u_values.append(policy.compute(x, t + delay))
        x = _apply_policy(plant, policy, x, t + delay, t_next, plant_substeps)
        if disturbance is not None:
            x = x + disturbance[k]
        times.append(t_next)
        states.append(x.copy())
        prev_policy = policy
    state_traj = DiscreteTrajectory(times, states, interpolation=LINEAR)
    control_traj = DiscreteTrajectory(u_times, u_values, interpolation=ZOH)
    return state_traj, control_traj, infos


def _apply_policy(plant, policy, x, t_from, t_to, substeps):
    if t_to <= t_from:
        return x
    h = (t_to - t_from) / substeps
    t = t_from
    for _ in range(substeps):
        u = policy.compute(x, t)
        x = _rk4_interval(plant, x, u, t, h, 1)
        t += h
    return x


def load_disturbance_csv(path, n_steps, state_dim):
    """Load an additive state-noise schedule, one row per control step."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            rows.append([float(c) for c in row])
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (n_steps, state_dim):
        raise ValidationError(
            f"disturbance CSV has shape {arr.shape}, expected ({n_steps}, {state_dim})")
    return arr
