"""Nonlinear optimal-control solvers: iLQR (single shooting) and GNMS
(Gauss-Newton multiple shooting).

Both algorithms share the same machinery per iteration: build a
linear-quadratic approximation around the current iterate (sensitivities,
cost expansions and, for GNMS, defects), solve it with the Gauss-Newton
Riccati sweep, and backtrack over step sizes against a merit function
``cost + mu * |defects|_1``. iLQR keeps the trajectory feasible by
re-rolling the dynamics with the updated policy; GNMS updates states and
controls simultaneously and lets the defect terms close the gaps.

Controls are piecewise constant over N uniform intervals; the running cost
uses the rectangle rule ``l(x_n, u_n, t_n) * dt``. Control boxes are
enforced by clamping inside rollouts and updates; other constraints enter
through quadratic penalties.

The per-stage work of the LQ approximation (and the per-interval defect
rollouts of GNMS) is distributed over ``workers`` forked processes; results
are reassembled in stage order so solver output is bit-identical for any
worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import constraint as _constraint
from . import cost as _cost
from . import diff
from .core import (ControlTrajectory, DiscreteTrajectory, LINEAR,
                   StateFeedbackController, StateTrajectory, ZOH, as_vector)
from .errors import ConfigurationError, NumericalFault
from .lq import LQOCProblem, gn_riccati_solve
from .parallel import map_stages, resolve_workers

ILQR = "ilqr"
GNMS = "gnms"

_DEFAULT_ALPHAS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)


@dataclass
class OptConProblem:
    """Nonlinear dynamics + cost (+ constraints) + initial state + horizon."""

    system: object
    cost: _cost.CostFunction
    x0: np.ndarray
    T: float
    constraints: object = None
    t0: float = 0.0

    def __post_init__(self):
        self.x0 = as_vector(self.x0, self.system.state_dim, "x0")
        if self.T <= 0:
            raise ConfigurationError("horizon T must be positive")


@dataclass
class NLOCSettings:
    algorithm: str = GNMS
    N: int = 100
    sensitivity: str = diff.EXACT_INTEGRATED
    max_iterations: int = 50
    convergence_tol: float = 1e-9
    alphas: tuple = _DEFAULT_ALPHAS
    merit_mu: float | None = None
    armijo: bool = False
    armijo_c: float = 1e-4
    workers: int | None = 1
    u_clamp: tuple | None = None
    rollout_substeps: int = 1
    lin_method: str = diff.AD
    cost_deriv: str = diff.ANALYTIC
    reg_lambda: float = 1e-6
    reg_lambda_max: float = 1e6
    constraint_penalty: float = 100.0
    defect_tol: float = 1e-8

    def __post_init__(self):
        if self.algorithm not in (ILQR, GNMS):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.N < 1:
            raise ConfigurationError("N must be >= 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.rollout_substeps < 1:
            raise ConfigurationError("rollout_substeps must be >= 1")
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas or any(not 0.0 < a <= 1.0 for a in alphas) \
                or any(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:])):
            raise ConfigurationError("alphas must be descending within (0, 1]")
        self.alphas = alphas
        if self.sensitivity not in (diff.FORWARD_EULER, diff.BACKWARD_EULER,
                                    diff.TUSTIN, diff.EXACT_INTEGRATED):
            raise ConfigurationError(f"unknown sensitivity method {self.sensitivity!r}")


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    defect_norm: float
    alpha: float
    reg_lambda: float
    merit: float
    expected_decrease: float
    accepted: bool


@dataclass
class NLOCSolution:
    x_traj: StateTrajectory
    u_traj: ControlTrajectory
    policy: StateFeedbackController
    cost: float
    defect_norm: float
    iterations: list
    converged: bool
    status: str
    xs: np.ndarray = None
    us: np.ndarray = None
    gains: np.ndarray = None

    @property
    def accepted_iterations(self):
        return [r for r in self.iterations if r.accepted]


def merit(cost, defect_norm, mu):
    """Line-search merit: cost plus weighted L1 defect norm."""
    if mu < 0:
        raise ConfigurationError("merit weight mu must be >= 0")
    return cost + mu * defect_norm


def _clamp_controls(us, u_clamp):
    if u_clamp is None:
        return us
    lb, ub = u_clamp
    return np.clip(us, lb, ub)


def _rk4_interval(sys, x, u, t, dt, substeps):
    """RK4 with ZOH control over one interval; returns the endpoint state."""
    h = dt / substeps
    tk = t
    for _ in range(substeps):
        k1 = np.asarray(sys.rhs(x, u, tk), dtype=float)
        k2 = np.asarray(sys.rhs(x + 0.5 * h * k1, u, tk + 0.5 * h), dtype=float)
        k3 = np.asarray(sys.rhs(x + 0.5 * h * k2, u, tk + 0.5 * h), dtype=float)
        k4 = np.asarray(sys.rhs(x + h * k3, u, tk + h), dtype=float)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tk = tk + h
    return x


def _rollout_states(sys, x_start, us, t0, dt, substeps):
    """Sequential shooting rollout; raises NumericalFault with the partial
    trajectory attached (``exc.partial``)."""
    N = us.shape[0]
    xs = np.empty((N + 1, x_start.shape[0]))
    xs[0] = x_start
    for n in range(N):
        xs[n + 1] = _rk4_interval(sys, xs[n], us[n], t0 + n * dt, dt, substeps)
        if not np.all(np.isfinite(xs[n + 1])):
            exc = NumericalFault(f"non-finite state in rollout at stage {n + 1}",
                                 time=t0 + (n + 1) * dt)
            exc.partial = xs[: n + 2]
            raise exc
    return xs


def _grid_cost(cost_fn, xs, us, t0, dt):
    N = us.shape[0]
    total = 0.0
    for n in range(N):
        total += cost_fn.evaluate_intermediate(xs[n], us[n], t0 + n * dt) * dt
    return float(total + cost_fn.evaluate_final(xs[N], t0 + N * dt))


def rollout(problem, u_traj, x_start=None, settings=None, return_traj=True):
    """Forward shooting pass: integrate the dynamics under ZOH controls and
    accumulate the discretized cost. Returns (StateTrajectory, cost)."""
    settings = settings or NLOCSettings()
    dt = problem.T / settings.N
    us = _controls_array(u_traj, settings.N, problem.system.control_dim,
                         problem.t0, dt)
    us = _clamp_controls(us, settings.u_clamp)
    x_start = problem.x0 if x_start is None else as_vector(
        x_start, problem.system.state_dim, "x_start")
    xs = _rollout_states(problem.system, x_start, us, problem.t0, dt,
                         settings.rollout_substeps)
    total = _grid_cost(problem.cost, xs, us, problem.t0, dt)
    if not return_traj:
        return xs, total
    times = problem.t0 + dt * np.arange(settings.N + 1)
    return DiscreteTrajectory(times, xs, interpolation=LINEAR), total


def _controls_array(u_traj, N, m, t0, dt):
    if u_traj is None:
        return np.zeros((N, m))
    if isinstance(u_traj, DiscreteTrajectory):
        return np.array([u_traj.value_at(t0 + n * dt) for n in range(N)])
    us = np.asarray(u_traj, dtype=float)
    if us.shape != (N, m):
        raise ConfigurationError(f"control guess has shape {us.shape}, expected {(N, m)}")
    return us.copy()


def _states_array(x_traj, N, n, t0, dt):
    if isinstance(x_traj, DiscreteTrajectory):
        return np.array([x_traj.value_at(t0 + k * dt) for k in range(N + 1)])
    xs = np.asarray(x_traj, dtype=float)
    if xs.shape != (N + 1, n):
        raise ConfigurationError(f"state guess has shape {xs.shape}, expected {(N + 1, n)}")
    return xs.copy()


# -- parallel stage workers (module level so forked children resolve them) --

def _lq_stage_worker(payload, lo, hi):
    (sys, cost_fn, xs, us, t0, dt, sens_method, lin_method, cost_deriv,
     substeps, want_defects) = payload
    out = []
    for n in range(lo, hi):
        tn = t0 + n * dt
        if sens_method == diff.EXACT_INTEGRATED:
            sens = diff.sensitivity_integrate(sys, xs[n], us[n], tn, dt,
                                              substeps=substeps,
                                              lin_method=lin_method)
        else:
            lin = diff.linearize_system(sys, xs[n], us[n], tn, method=lin_method)
            sens = diff.sensitivity_approx(lin, dt, method=sens_method)
        qa = _cost.quadratic_approximation(cost_fn, xs[n], us[n], tn,
                                           mode=_cost.INTERMEDIATE,
                                           deriv=cost_deriv)
        if want_defects:
            endpoint = _rk4_interval(sys, xs[n], us[n], tn, dt, substeps)
            d = endpoint - xs[n + 1]
        else:
            d = np.zeros(xs.shape[1])
        out.append((sens.A, sens.B, qa.q * dt, qa.q_x * dt, qa.q_u * dt,
                    qa.Q_xx * dt, qa.R_uu * dt, qa.P_ux * dt, d))
    return out


def _defect_worker(payload, lo, hi):
    sys, xs, us, t0, dt, substeps = payload
    out = []
    for n in range(lo, hi):
        endpoint = _rk4_interval(sys, xs[n], us[n], t0 + n * dt, dt, substeps)
        out.append(endpoint - xs[n + 1])
    return out


def _compute_defects(sys, xs, us, t0, dt, substeps, workers):
    rows = map_stages(_defect_worker, (sys, xs, us, t0, dt, substeps),
                      us.shape[0], workers)
    return np.array(rows)


def lq_approximation(problem, xs, us, settings, cost_fn=None):
    """Stage-wise LQ model of the problem around (xs, us).

    Sensitivities follow ``settings.sensitivity``; cost expansions are
    scaled by dt (final stage unscaled); GNMS additionally fills the defect
    vectors from per-interval rollouts. Stage work is distributed over
    ``settings.workers`` with stage-order reassembly.
    """
    cost_fn = cost_fn if cost_fn is not None else problem.cost
    N = settings.N
    n, m = problem.system.state_dim, problem.system.control_dim
    dt = problem.T / N
    xs = _states_array(xs, N, n, problem.t0, dt)
    us = _controls_array(us, N, m, problem.t0, dt)
    want_defects = settings.algorithm == GNMS
    payload = (problem.system, cost_fn, xs, us, problem.t0, dt,
               settings.sensitivity, settings.lin_method, settings.cost_deriv,
               settings.rollout_substeps, want_defects)
    rows = map_stages(_lq_stage_worker, payload, N, settings.workers)
    p = LQOCProblem.zeros(N, n, m)
    for k, row in enumerate(rows):
        p.A[k], p.B[k], p.q[k], p.q_x[k], p.q_u[k], p.Q[k], p.R[k], p.P[k], p.d[k] = row
    qa_f = _cost.quadratic_approximation(cost_fn, xs[N], None,
                                         problem.t0 + N * dt, mode=_cost.FINAL,
                                         deriv=settings.cost_deriv)
    p.q[N] = qa_f.q
    p.q_x[N] = qa_f.q_x
    p.Q[N] = qa_f.Q_xx
    if settings.u_clamp is not None:
        p.u_lb, p.u_ub = (np.asarray(settings.u_clamp[0], dtype=float),
                          np.asarray(settings.u_clamp[1], dtype=float))
    return p


def _fold_constraints(problem, settings):
    """Fold the constraint container into the working cost and clamp box.

    Control boxes tighten the clamp; everything else becomes quadratic
    penalties with stiffness ``settings.constraint_penalty``.
    """
    if problem.constraints is None:
        return problem.cost, settings
    cc = problem.constraints
    m = problem.system.control_dim
    lb = np.full(m, -np.inf)
    ub = np.full(m, np.inf)
    if settings.u_clamp is not None:
        lb = np.maximum(lb, settings.u_clamp[0])
        ub = np.minimum(ub, settings.u_clamp[1])
    have_box = settings.u_clamp is not None
    penalty_terms = []
    for term in cc.intermediate_terms:
        if isinstance(term, _constraint.ControlBoxConstraint):
            lb[: term.dim] = np.maximum(lb[: term.dim], term.lb)
            ub[: term.dim] = np.minimum(ub[: term.dim], term.ub)
            have_box = True
        else:
            penalty_terms.extend(_constraint.to_penalty_terms(
                _constraint.ConstraintContainer([term]), settings.constraint_penalty))
    terminal_penalties = _constraint.to_penalty_terms(
        cc, settings.constraint_penalty, phase=_constraint.TERMINAL)
    work_cost = _cost.CostFunction(
        list(problem.cost.intermediate_terms) + penalty_terms,
        list(problem.cost.final_terms) + terminal_penalties)
    if have_box:
        settings = replace(settings, u_clamp=(lb, ub))
    return work_cost, settings


def solve(problem, settings, initial_guess=None):
    """Run the configured Gauss-Newton shooting algorithm to convergence.

    ``initial_guess`` may be a control array/trajectory or a tuple
    (controls, states). Returns an :class:`NLOCSolution`; solver trouble is
    reported through its ``status`` field rather than exceptions, except for
    configuration errors.
    """
    work_cost, settings = _fold_constraints(problem, settings)
    sys = problem.system
    N = settings.N
    n, m = sys.state_dim, sys.control_dim
    dt = problem.T / N
    t0 = problem.t0
    substeps = settings.rollout_substeps
    workers = resolve_workers(settings.workers)

    u_guess, x_guess = None, None
    if initial_guess is not None:
        if isinstance(initial_guess, tuple):
            u_guess = initial_guess[0]
            x_guess = initial_guess[1] if len(initial_guess) > 1 else None
        else:
            u_guess = initial_guess
    us = _clamp_controls(_controls_array(u_guess, N, m, t0, dt), settings.u_clamp)

    gnms = settings.algorithm == GNMS
    if gnms:
        if x_guess is not None:
            xs = _states_array(x_guess, N, n, t0, dt)
            xs[0] = problem.x0
        else:
            xs = np.tile(problem.x0, (N + 1, 1))
    else:
        xs = _rollout_states(sys, problem.x0, us, t0, dt, substeps)
    defects = np.zeros((N, n))
    cost_val = _grid_cost(work_cost, xs, us, t0, dt)
    defect_norm = 0.0

    history = []
    converged = False
    status = "max_iterations"
    rsol = None
    for it in range(1, settings.max_iterations + 1):
        lqp = lq_approximation(problem, xs, us, settings, cost_fn=work_cost)
        if gnms:
            defects = lqp.d.copy()
            defect_norm = float(np.sum(np.abs(defects)))
        rsol = gn_riccati_solve(lqp, reg_lambda=settings.reg_lambda,
                                reg_lambda_max=settings.reg_lambda_max)
        ed = rsol.expected_decrease(1.0)
        if ed < settings.convergence_tol and defect_norm <= settings.defect_tol:
            converged = True
            status = "converged"
            break
        # Fixed default weight: scaling mu with the running cost penalizes the
        # transient defects of early full steps so hard that the line search
        # degenerates to tiny alphas and multiple shooting crawls.
        mu = settings.merit_mu if settings.merit_mu is not None else 10.0
        merit_old = merit(cost_val, defect_norm, mu)
        accepted = None
        for alpha in settings.alphas:
            try:
                if gnms:
                    us_new = _clamp_controls(us + alpha * rsol.du, settings.u_clamp)
                    xs_new = xs + alpha * rsol.dx
                    defects_new = _compute_defects(sys, xs_new, us_new, t0, dt,
                                                   substeps, workers)
                else:
                    us_new = np.empty_like(us)
                    xs_new = np.empty_like(xs)
                    xs_new[0] = xs[0]
                    for k in range(N):
                        u_k = (us[k] + alpha * rsol.u_ff_delta[k]
                               + rsol.K[k] @ (xs_new[k] - xs[k]))
                        us_new[k] = _clamp_controls(u_k, settings.u_clamp)
                        xs_new[k + 1] = _rk4_interval(sys, xs_new[k], us_new[k],
                                                      t0 + k * dt, dt, substeps)
                        if not np.all(np.isfinite(xs_new[k + 1])):
                            raise NumericalFault("diverged rollout")
                    defects_new = np.zeros((N, n))
                cost_new = _grid_cost(work_cost, xs_new, us_new, t0, dt)
            except NumericalFault:
                continue
            if not np.isfinite(cost_new):
                continue
            defect_norm_new = float(np.sum(np.abs(defects_new)))
            merit_new = merit(cost_new, defect_norm_new, mu)
            if settings.armijo:
                ok = merit_new <= merit_old - settings.armijo_c * alpha * ed
            else:
                ok = merit_new < merit_old
            if ok:
                accepted = (alpha, xs_new, us_new, cost_new, defects_new,
                            defect_norm_new, merit_new)
                break
        if accepted is None:
            if ed < settings.convergence_tol:
                converged = True
                status = "converged"
            else:
                status = "line_search_failed"
                history.append(IterationRecord(
                    iteration=it, cost=cost_val, defect_norm=defect_norm,
                    alpha=0.0, reg_lambda=rsol.reg_lambda, merit=merit_old,
                    expected_decrease=ed, accepted=False))
            break
        alpha, xs, us, cost_val, defects, defect_norm, merit_new = accepted
        history.append(IterationRecord(
            iteration=it, cost=cost_val, defect_norm=defect_norm, alpha=alpha,
            reg_lambda=rsol.reg_lambda, merit=merit_new,
            expected_decrease=ed, accepted=True))
        if merit_old - merit_new < settings.convergence_tol \
                and defect_norm <= settings.defect_tol:
            converged = True
            status = "converged"
            break

    times = t0 + dt * np.arange(N + 1)
    x_traj = DiscreteTrajectory(times, xs, interpolation=LINEAR)
    u_traj = DiscreteTrajectory(times[:N], us, interpolation=ZOH)
    # RiccatiSolution gains carry the stabilizing sign already
    gains = rsol.K.copy() if rsol is not None else np.zeros((N, m, n))
    sol = NLOCSolution(
        x_traj=x_traj, u_traj=u_traj, policy=None, cost=cost_val,
        defect_norm=defect_norm, iterations=history, converged=converged,
        status=status, xs=xs, us=us, gains=gains)
    sol.policy = update_policy_from_solution(sol)
    return sol


def update_policy_from_solution(sol):
    """Time-varying state-feedback law from a solved instance.

    u(x, t) = u_n + K_n (x - x_n) on stage n (ZOH in time); beyond the
    horizon the last stage is edge-held.
    """
    times = sol.u_traj.timestamps
    u_ff = DiscreteTrajectory(times, sol.us, interpolation=ZOH)
    gains = DiscreteTrajectory(times, sol.gains, interpolation=ZOH)
    x_ref = DiscreteTrajectory(times, sol.xs[:-1], interpolation=ZOH)
    return StateFeedbackController(u_ff, gains, x_ref)
