"""Vector-valued constraint terms stacked into containers with bounds.

Terms evaluate to g(x, u, t) with per-row lower/upper bounds; containers
stack terms in insertion order (never summed). Only first-order derivatives
are provided. Solvers consume constraints either by clamping (control boxes)
or through the quadratic-penalty bridge :func:`to_penalty_terms`; equality
constraints are expressed as lb == ub.
"""

from __future__ import annotations

import numpy as np

from . import diff
from .core import as_vector
from .cost import ControlBarrierTerm, PathBarrierTerm, StateBarrierTerm
from .errors import ConfigurationError

INTERMEDIATE = "intermediate"
TERMINAL = "terminal"


class ConstraintTerm:
    """Base term: a map (x, u, t) -> g with bounds lb <= g <= ub."""

    def __init__(self, lb, ub):
        self.lb = as_vector(lb, name="lb")
        self.ub = as_vector(ub, self.lb.shape[0], "ub")
        if np.any(self.lb > self.ub):
            raise ConfigurationError("need lb <= ub componentwise")

    @property
    def dim(self):
        return self.lb.shape[0]

    @property
    def depends_on_control(self):
        raise NotImplementedError

    def evaluate(self, x, u, t):
        raise NotImplementedError

    def jacobians(self, x, u, t):
        raise NotImplementedError


class ControlBoxConstraint(ConstraintTerm):
    """lb <= u <= ub."""

    depends_on_control = True

    def evaluate(self, x, u, t):
        return u[: self.dim] if len(u) > self.dim else u

    def jacobians(self, x, u, t):
        n, m = len(x), len(u)
        Ju = np.eye(m)[: self.dim]
        return np.zeros((self.dim, n)), Ju


class StateBoxConstraint(ConstraintTerm):
    """lb <= x <= ub."""

    depends_on_control = False

    def evaluate(self, x, u, t):
        return x[: self.dim] if len(x) > self.dim else x

    def jacobians(self, x, u, t):
        n = len(x)
        m = 0 if u is None else len(u)
        return np.eye(n)[: self.dim], np.zeros((self.dim, m))


class LinearPathConstraint(ConstraintTerm):
    """lb <= C x + D u + e <= ub."""

    def __init__(self, C, D, e, lb, ub):
        super().__init__(lb, ub)
        self.C = np.asarray(C, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.e = as_vector(e, self.C.shape[0], "e")
        if self.C.shape[0] != self.dim or self.D.shape[0] != self.dim:
            raise ConfigurationError("C/D rows must match the bound dimension")

    @property
    def depends_on_control(self):
        return bool(np.any(self.D != 0.0))

    def evaluate(self, x, u, t):
        out = self.C.dot(x) + self.e
        if u is not None and len(u) > 0:
            out = out + self.D.dot(u)
        return out

    def jacobians(self, x, u, t):
        return self.C.copy(), self.D.copy()


class ConstraintContainer:
    """Stacked intermediate and terminal constraint terms.

    Terminal terms must not depend on the control.
    """

    def __init__(self, intermediate_terms=(), terminal_terms=()):
        self.intermediate_terms = []
        self.terminal_terms = []
        for term in intermediate_terms:
            self.add_intermediate(term)
        for term in terminal_terms:
            self.add_terminal(term)

    def add_intermediate(self, term):
        self.intermediate_terms.append(term)
        return self

    def add_terminal(self, term):
        if term.depends_on_control:
            raise ConfigurationError("terminal constraints must not depend on u")
        self.terminal_terms.append(term)
        return self

    def terms(self, phase):
        if phase == INTERMEDIATE:
            return self.intermediate_terms
        if phase == TERMINAL:
            return self.terminal_terms
        raise ConfigurationError(f"unknown phase {phase!r}")


def evaluate_constraints(cc, x, u, t, phase=INTERMEDIATE):
    """Stacked (g, lb, ub) in insertion order."""
    x = np.asarray(x, dtype=float)
    u = None if u is None else np.asarray(u, dtype=float)
    terms = cc.terms(phase)
    if not terms:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    gs, lbs, ubs = [], [], []
    for term in terms:
        g = np.asarray(term.evaluate(x, u, t), dtype=float)
        if g.shape[0] != term.dim:
            raise ConfigurationError(
                f"term returned dimension {g.shape[0]}, bounds have {term.dim}")
        gs.append(g)
        lbs.append(term.lb)
        ubs.append(term.ub)
    return np.concatenate(gs), np.concatenate(lbs), np.concatenate(ubs)


def constraint_jacobians(cc, x, u, t, phase=INTERMEDIATE, deriv=diff.ANALYTIC):
    """Row-stacked Jacobians (J_x, J_u) aligned with evaluate_constraints."""
    x = np.asarray(x, dtype=float)
    u = np.zeros(0) if u is None else np.asarray(u, dtype=float)
    n, m = x.shape[0], u.shape[0]
    terms = cc.terms(phase)
    if not terms:
        return np.zeros((0, n)), np.zeros((0, m))
    Jx_rows, Ju_rows = [], []
    for term in terms:
        if deriv == diff.ANALYTIC:
            Jx, Ju = term.jacobians(x, u, t)
            Jx = np.asarray(Jx, dtype=float).reshape(term.dim, n)
            Ju = np.asarray(Ju, dtype=float)[:, :m].reshape(term.dim, m)
        elif deriv == diff.AD:
            z = np.concatenate([x, u])
            J = diff.jacobian_ad(lambda zz, _t=term: _t.evaluate(zz[:n], zz[n:], t), z)
            Jx, Ju = J[:, :n], J[:, n:]
        else:
            raise ConfigurationError(f"unknown derivative mode {deriv!r}")
        Jx_rows.append(Jx)
        Ju_rows.append(Ju)
    return np.vstack(Jx_rows), np.vstack(Ju_rows)


def violation(cc, x, u, t, phase=INTERMEDIATE):
    """L1 exterior distance: sum_i max(0, g_i - ub_i) + max(0, lb_i - g_i)."""
    g, lb, ub = evaluate_constraints(cc, x, u, t, phase)
    if g.shape[0] == 0:
        return 0.0
    return float(np.sum(np.maximum(0.0, g - ub) + np.maximum(0.0, lb - g)))


def to_penalty_terms(cc, alpha, phase=INTERMEDIATE):
    """Quadratic-penalty cost terms mirroring each constraint term."""
    if alpha <= 0:
        raise ConfigurationError("penalty stiffness alpha must be positive")
    out = []
    for term in cc.terms(phase):
        if isinstance(term, StateBoxConstraint):
            out.append(StateBarrierTerm(term.lb, term.ub, alpha))
        elif isinstance(term, ControlBoxConstraint):
            out.append(ControlBarrierTerm(term.lb, term.ub, alpha))
        elif isinstance(term, LinearPathConstraint):
            out.append(PathBarrierTerm(term.C, term.D, term.e, term.lb, term.ub, alpha))
        else:
            raise ConfigurationError(
                f"no penalty bridge for term type {type(term).__name__}")
    return out
