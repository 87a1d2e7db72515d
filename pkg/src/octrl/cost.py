"""Term-based cost functions.

A cost function is a sum of scalar terms, kept in separate intermediate and
final lists. Every term evaluates as a function of (x, u, t) and exposes
analytic first and second derivatives; an AD path through the diff module is
available for cross-checking and for custom terms.

Quadratic terms use the convention WITHOUT the 1/2 factor,

    J = (x - x_ref)' Q (x - x_ref) + (u - u_ref)' R (u - u_ref),

so config weights read directly. Gradients/Hessians stored in a
:class:`QuadraticApproximation` are the true derivatives (for the term above
q_x = 2 Q (x - x_ref), Q_xx = 2 Q); the LQ solvers consume them in the
matching 1/2-free derivation.
"""

from __future__ import annotations

import numpy as np

from . import diff
from .core import DiscreteTrajectory, as_vector
from .dual import relu
from .errors import ConfigurationError

INTERMEDIATE = "intermediate"
FINAL = "final"


def _check_symmetric(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
        raise ConfigurationError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


def _ctrl_or_none(u):
    """Normalize the control argument: final-cost evaluation passes None."""
    if u is None:
        return None
    u = np.asarray(u)
    return None if u.shape[0] == 0 else u


class CostTerm:
    """Scalar cost building block with an optional activation window."""

    def __init__(self, t_on=None, t_off=None):
        if (t_on is None) != (t_off is None):
            raise ConfigurationError("activation window needs both t_on and t_off")
        if t_on is not None and not t_on < t_off:
            raise ConfigurationError("activation window needs t_on < t_off")
        self.t_on = t_on
        self.t_off = t_off

    def active(self, t):
        return self.t_on is None or (self.t_on <= t <= self.t_off)

    @property
    def depends_on_control(self):
        raise NotImplementedError

    # value() must be written over dual-aware arithmetic (AD path); the
    # activation gate is applied by the callers below.
    def value(self, x, u, t):
        raise NotImplementedError

    def gradients(self, x, u, t):
        raise NotImplementedError

    def hessians(self, x, u, t):
        raise NotImplementedError


class QuadraticTerm(CostTerm):
    """(x - x_ref)' Q (x - x_ref) + (u - u_ref)' R (u - u_ref)."""

    def __init__(self, Q, R, x_ref=None, u_ref=None, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.Q = _check_symmetric(Q, "Q")
        self.R = _check_symmetric(R, "R")
        self.x_ref = as_vector(x_ref if x_ref is not None else np.zeros(self.Q.shape[0]),
                               self.Q.shape[0], "x_ref")
        self.u_ref = as_vector(u_ref if u_ref is not None else np.zeros(self.R.shape[0]),
                               self.R.shape[0], "u_ref")

    @property
    def depends_on_control(self):
        return bool(np.any(self.R != 0.0))

    def value(self, x, u, t):
        dx = x - self.x_ref
        out = dx.dot(self.Q.dot(dx))
        u = _ctrl_or_none(u)
        if u is not None:
            du = u - self.u_ref
            out = out + du.dot(self.R.dot(du))
        return out

    def gradients(self, x, u, t):
        u = _ctrl_or_none(u)
        gu = 2.0 * self.R.dot(u - self.u_ref) if u is not None else np.zeros(self.R.shape[0])
        return 2.0 * self.Q.dot(x - self.x_ref), gu

    def hessians(self, x, u, t):
        return 2.0 * self.Q, 2.0 * self.R, np.zeros((self.R.shape[0], self.Q.shape[0]))


class LinearTerm(CostTerm):
    """a' x + b' u."""

    def __init__(self, a, b, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.a = as_vector(a, name="a")
        self.b = as_vector(b, name="b")

    @property
    def depends_on_control(self):
        return bool(np.any(self.b != 0.0))

    def value(self, x, u, t):
        u = _ctrl_or_none(u)
        out = self.a.dot(x)
        return out if u is None else out + self.b.dot(u)

    def gradients(self, x, u, t):
        return self.a.copy(), self.b.copy()

    def hessians(self, x, u, t):
        n, m = self.a.shape[0], self.b.shape[0]
        return np.zeros((n, n)), np.zeros((m, m)), np.zeros((m, n))


class MixedTerm(CostTerm):
    """Cross term  2 (u - u_ref)' P (x - x_ref)."""

    def __init__(self, P, x_ref=None, u_ref=None, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.P = np.asarray(P, dtype=float)
        if self.P.ndim != 2:
            raise ConfigurationError("P must be a matrix")
        m, n = self.P.shape
        self.x_ref = as_vector(x_ref if x_ref is not None else np.zeros(n), n, "x_ref")
        self.u_ref = as_vector(u_ref if u_ref is not None else np.zeros(m), m, "u_ref")

    @property
    def depends_on_control(self):
        return bool(np.any(self.P != 0.0))

    def value(self, x, u, t):
        u = _ctrl_or_none(u)
        if u is None:
            return 0.0 * x[0]
        return 2.0 * (u - self.u_ref).dot(self.P.dot(x - self.x_ref))

    def gradients(self, x, u, t):
        u = _ctrl_or_none(u)
        m, n = self.P.shape
        if u is None:
            return np.zeros(n), np.zeros(m)
        return 2.0 * self.P.T.dot(u - self.u_ref), 2.0 * self.P.dot(x - self.x_ref)

    def hessians(self, x, u, t):
        m, n = self.P.shape
        return np.zeros((n, n)), np.zeros((m, m)), 2.0 * self.P


class QuadTrackingTerm(CostTerm):
    """Quadratic penalty against time-interpolated reference trajectories."""

    def __init__(self, Q, R, x_ref_traj, u_ref_traj, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.Q = _check_symmetric(Q, "Q")
        self.R = _check_symmetric(R, "R")
        if not isinstance(x_ref_traj, DiscreteTrajectory) or \
                not isinstance(u_ref_traj, DiscreteTrajectory):
            raise ConfigurationError("tracking references must be trajectories")
        self.x_ref_traj = x_ref_traj
        self.u_ref_traj = u_ref_traj

    @property
    def depends_on_control(self):
        return bool(np.any(self.R != 0.0))

    def value(self, x, u, t):
        dx = x - self.x_ref_traj.value_at(t)
        out = dx.dot(self.Q.dot(dx))
        u = _ctrl_or_none(u)
        if u is not None:
            du = u - self.u_ref_traj.value_at(t)
            out = out + du.dot(self.R.dot(du))
        return out

    def gradients(self, x, u, t):
        u = _ctrl_or_none(u)
        gu = (2.0 * self.R.dot(u - self.u_ref_traj.value_at(t))
              if u is not None else np.zeros(self.R.shape[0]))
        return 2.0 * self.Q.dot(x - self.x_ref_traj.value_at(t)), gu

    def hessians(self, x, u, t):
        return 2.0 * self.Q, 2.0 * self.R, np.zeros((self.R.shape[0], self.Q.shape[0]))


def _box_penalty(v, lb, ub, alpha):
    total = 0.0
    for i in range(len(lb)):
        over = relu(v[i] - ub[i])
        under = relu(lb[i] - v[i])
        total = total + alpha * (over * over + under * under)
    return total


def _box_penalty_grad(v, lb, ub, alpha):
    over = np.maximum(0.0, v - ub)
    under = np.maximum(0.0, lb - v)
    return 2.0 * alpha * (over - under)


def _box_penalty_hess(v, lb, ub, alpha):
    active = ((v > ub) | (v < lb)).astype(float)
    return np.diag(2.0 * alpha * active)


class StateBarrierTerm(CostTerm):
    """Soft state bounds: alpha * sum_i relu(x_i - ub_i)^2 + relu(lb_i - x_i)^2.

    Quadratic penalty, finite everywhere and C1 at the bounds, so shooting
    rollouts may pass through infeasible iterates safely.
    """

    def __init__(self, lb, ub, alpha, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.lb = as_vector(lb, name="lb")
        self.ub = as_vector(ub, self.lb.shape[0], "ub")
        if np.any(self.lb > self.ub):
            raise ConfigurationError("need lb <= ub")
        if alpha <= 0:
            raise ConfigurationError("barrier stiffness alpha must be positive")
        self.alpha = float(alpha)

    @property
    def depends_on_control(self):
        return False

    def value(self, x, u, t):
        return _box_penalty(x, self.lb, self.ub, self.alpha)

    def gradients(self, x, u, t):
        m = 0 if u is None else len(u)
        return _box_penalty_grad(x, self.lb, self.ub, self.alpha), np.zeros(m)

    def hessians(self, x, u, t):
        n = self.lb.shape[0]
        m = 0 if u is None else len(u)
        return _box_penalty_hess(x, self.lb, self.ub, self.alpha), \
            np.zeros((m, m)), np.zeros((m, n))


class ControlBarrierTerm(CostTerm):
    """Soft control bounds (quadratic penalty), mirror of StateBarrierTerm."""

    def __init__(self, lb, ub, alpha, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.lb = as_vector(lb, name="lb")
        self.ub = as_vector(ub, self.lb.shape[0], "ub")
        if np.any(self.lb > self.ub):
            raise ConfigurationError("need lb <= ub")
        if alpha <= 0:
            raise ConfigurationError("barrier stiffness alpha must be positive")
        self.alpha = float(alpha)

    @property
    def depends_on_control(self):
        return True

    def value(self, x, u, t):
        return _box_penalty(u, self.lb, self.ub, self.alpha)

    def gradients(self, x, u, t):
        return np.zeros(len(x)), _box_penalty_grad(u, self.lb, self.ub, self.alpha)

    def hessians(self, x, u, t):
        n = len(x)
        return np.zeros((n, n)), _box_penalty_hess(u, self.lb, self.ub, self.alpha), \
            np.zeros((self.lb.shape[0], n))


class PathBarrierTerm(CostTerm):
    """Quadratic penalty on bounds of an affine path quantity g = C x + D u + e."""

    def __init__(self, C, D, e, lb, ub, alpha, t_on=None, t_off=None):
        super().__init__(t_on, t_off)
        self.C = np.asarray(C, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.e = as_vector(e, self.C.shape[0], "e")
        self.lb = as_vector(lb, self.C.shape[0], "lb")
        self.ub = as_vector(ub, self.C.shape[0], "ub")
        if np.any(self.lb > self.ub):
            raise ConfigurationError("need lb <= ub")
        if alpha <= 0:
            raise ConfigurationError("barrier stiffness alpha must be positive")
        self.alpha = float(alpha)

    @property
    def depends_on_control(self):
        return bool(np.any(self.D != 0.0))

    def _g(self, x, u):
        u = _ctrl_or_none(u)
        out = self.C.dot(x) + self.e
        return out if u is None else out + self.D.dot(u)

    def value(self, x, u, t):
        return _box_penalty(self._g(x, u), self.lb, self.ub, self.alpha)

    def gradients(self, x, u, t):
        gg = _box_penalty_grad(self._g(x, u), self.lb, self.ub, self.alpha)
        return self.C.T.dot(gg), self.D.T.dot(gg)

    def hessians(self, x, u, t):
        Hg = _box_penalty_hess(self._g(x, u), self.lb, self.ub, self.alpha)
        return self.C.T.dot(Hg).dot(self.C), self.D.T.dot(Hg).dot(self.D), \
            self.D.T.dot(Hg).dot(self.C)


class CostFunction:
    """Sum of intermediate terms plus a sum of final terms.

    Final terms must not depend on the control (checked on insertion).
    """

    def __init__(self, intermediate_terms=(), final_terms=()):
        self.intermediate_terms = []
        self.final_terms = []
        for term in intermediate_terms:
            self.add_intermediate(term)
        for term in final_terms:
            self.add_final(term)

    def add_intermediate(self, term):
        self.intermediate_terms.append(term)
        return self

    def add_final(self, term):
        if term.depends_on_control:
            raise ConfigurationError(
                "final cost terms must not depend on the control "
                "(control weights must be zero)")
        self.final_terms.append(term)
        return self

    def evaluate_intermediate(self, x, u, t):
        return sum(term.value(x, u, t) for term in self.intermediate_terms
                   if term.active(t))

    def evaluate_final(self, x, t):
        return sum(term.value(x, None, t) for term in self.final_terms
                   if term.active(t))


def evaluate_term(term, x, u, t):
    """Scalar term value; zero outside the activation window."""
    if not term.active(t):
        return 0.0
    return float(term.value(np.asarray(x, dtype=float), np.asarray(u, dtype=float), t))


def evaluate_intermediate(cf, x, u, t):
    return float(cf.evaluate_intermediate(np.asarray(x, dtype=float),
                                          np.asarray(u, dtype=float), t))


def evaluate_final(cf, x, t):
    return float(cf.evaluate_final(np.asarray(x, dtype=float), t))


class QuadraticApproximation:
    """Second-order expansion of a cost: value, gradients, Hessian blocks."""

    def __init__(self, n, m):
        self.q = 0.0
        self.q_x = np.zeros(n)
        self.q_u = np.zeros(m)
        self.Q_xx = np.zeros((n, n))
        self.R_uu = np.zeros((m, m))
        self.P_ux = np.zeros((m, n))

    def scaled(self, factor):
        out = QuadraticApproximation(self.q_x.shape[0], self.q_u.shape[0])
        out.q = self.q * factor
        out.q_x = self.q_x * factor
        out.q_u = self.q_u * factor
        out.Q_xx = self.Q_xx * factor
        out.R_uu = self.R_uu * factor
        out.P_ux = self.P_ux * factor
        return out


def quadratic_approximation(cf, x, u, t, mode=INTERMEDIATE, deriv=diff.ANALYTIC):
    """Value, gradient and Hessian blocks of the summed cost at (x, u, t)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float) if u is not None else np.zeros(0)
    n, m = x.shape[0], u.shape[0]
    terms = cf.intermediate_terms if mode == INTERMEDIATE else cf.final_terms
    approx = QuadraticApproximation(n, m)
    for term in terms:
        if not term.active(t):
            continue
        approx.q += float(term.value(x, u, t))
        if deriv == diff.ANALYTIC:
            gx, gu = term.gradients(x, u, t)
            Hxx, Huu, Hux = term.hessians(x, u, t)
        elif deriv == diff.AD:
            z = np.concatenate([x, u])
            fz = lambda zz: term.value(zz[:n], zz[n:], t)
            g = diff.gradient_ad(fz, z)
            H = diff.hessian_ad(fz, z)
            gx, gu = g[:n], g[n:]
            Hxx, Huu, Hux = H[:n, :n], H[n:, n:], H[n:, :n]
        else:
            raise ConfigurationError(f"unknown derivative mode {deriv!r}")
        approx.q_x += np.asarray(gx, dtype=float)
        if m:
            approx.q_u += np.asarray(gu, dtype=float)[:m]
        approx.Q_xx += np.asarray(Hxx, dtype=float)
        if m:
            approx.R_uu += np.asarray(Huu, dtype=float)[:m, :m]
            approx.P_ux += np.asarray(Hux, dtype=float)[:m, :]
    return approx


def load_costfunction(source, state_dim=None, control_dim=None):
    """Build a CostFunction from INI text (or a path to it).

    See :mod:`octrl.config` for the format: one ``[cost.termK]`` section per
    term. Dimensions are cross-checked when given.
    """
    from . import config as _config
    return _config.load_costfunction(source, state_dim, control_dim)
