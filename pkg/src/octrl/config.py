"""Problem definitions from INI-style text files.

Format summary (see README for the full page):

* sections: ``[model]``, ``[initial_state]``, ``[cost.termK]``,
  ``[constraints.termK]``, ``[solver]``, ``[mpc]``, ``[integrator]``,
  ``[lqr]``, ``[output]``
* vectors are comma-separated: ``x0 = 0.0, 0.0``
* matrices are ``diag(1, 2)`` or full row-semicolon form ``1, 0; 0, 1``
* booleans: true/false/yes/no/1/0

Syntax problems raise :class:`ParseError` (with line info when known);
semantic problems, including any dimension inconsistent with the chosen
model and any unknown section or key, raise :class:`ValidationError`
naming the section and key.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import cost as _cost
from . import models as _models
from .constraint import (ConstraintContainer, ControlBoxConstraint,
                         LinearPathConstraint, StateBoxConstraint)
from .core import DiscreteTrajectory, ZOH
from .errors import ConfigurationError, ParseError, ValidationError
from .integrate import IntegratorSettings
from .mpc import MpcSettings
from .nloc import NLOCSettings


# -- value parsers ---------------------------------------------------------

def parse_scalar(text, section, key):
    try:
        return float(text.strip())
    except ValueError:
        raise ParseError(f"[{section}] {key}: cannot parse number {text.strip()!r}",
                         section=section)


def parse_int(text, section, key):
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"[{section}] {key}: cannot parse integer {text.strip()!r}",
                         section=section)


def parse_bool(text, section, key):
    v = text.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ParseError(f"[{section}] {key}: cannot parse boolean {text.strip()!r}",
                     section=section)


def parse_vector(text, section, key):
    parts = [p for p in text.split(",") if p.strip() != ""]
    if not parts:
        raise ParseError(f"[{section}] {key}: empty vector", section=section)
    try:
        return np.array([float(p) for p in parts], dtype=float)
    except ValueError:
        raise ParseError(f"[{section}] {key}: cannot parse vector {text.strip()!r}",
                         section=section)


def parse_matrix(text, section, key):
    """``diag(...)`` or semicolon-separated rows of comma-separated entries."""
    s = text.strip()
    if s.lower().startswith("diag(") and s.endswith(")"):
        d = parse_vector(s[5:-1], section, key)
        return np.diag(d)
    rows = [r for r in s.split(";") if r.strip() != ""]
    if not rows:
        raise ParseError(f"[{section}] {key}: empty matrix", section=section)
    mat = [parse_vector(r, section, key) for r in rows]
    widths = {row.shape[0] for row in mat}
    if len(widths) != 1:
        raise ParseError(f"[{section}] {key}: ragged matrix rows", section=section)
    return np.vstack(mat)


def parse_str(text, section, key):
    return text.strip()


# -- schema ----------------------------------------------------------------

_SCHEMA = {
    "model": {"name": parse_str},            # extra keys = parameter overrides
    "initial_state": {"x0": parse_vector},
    "solver": {
        "algorithm": parse_str, "T": parse_scalar, "N": parse_int,
        "sensitivity": parse_str, "max_iterations": parse_int,
        "convergence_tol": parse_scalar, "workers": parse_int,
        "rollout_substeps": parse_int, "line_search_alphas": parse_vector,
        "merit_mu": parse_scalar, "armijo": parse_bool, "armijo_c": parse_scalar,
        "u_clamp_lb": parse_vector, "u_clamp_ub": parse_vector,
        "lin_method": parse_str, "cost_deriv": parse_str,
        "reg_lambda": parse_scalar, "reg_lambda_max": parse_scalar,
        "constraint_penalty": parse_scalar, "defect_tol": parse_scalar,
    },
    "mpc": {
        "horizon_mode": parse_str, "end_time": parse_scalar,
        "min_horizon": parse_scalar, "delay_estimate": parse_scalar,
        "iterations_per_step": parse_int, "warm_start": parse_bool,
        "control_dt": parse_scalar, "t_end": parse_scalar,
        "disturbance": parse_str, "plant_substeps": parse_int,
    },
    "integrator": {
        "scheme": parse_str, "dt": parse_scalar, "abs_tol": parse_scalar,
        "rel_tol": parse_scalar, "max_steps": parse_int,
        "t0": parse_scalar, "t1": parse_scalar, "u": parse_vector,
    },
    "lqr": {
        "mode": parse_str, "A": parse_matrix, "B": parse_matrix,
        "Q": parse_matrix, "R": parse_matrix, "tol": parse_scalar,
        "max_iters": parse_int, "dt": parse_scalar,
    },
    "output": {"dir": parse_str, "prefix": parse_str},
}

_COST_KEYS = {
    "kind": parse_str, "role": parse_str, "Q": parse_matrix, "R": parse_matrix,
    "P": parse_matrix, "a": parse_vector, "b": parse_vector,
    "x_ref": parse_vector, "u_ref": parse_vector, "lb": parse_vector,
    "ub": parse_vector, "alpha": parse_scalar, "t_on": parse_scalar,
    "t_off": parse_scalar, "x_ref_times": parse_vector, "x_ref_values": parse_matrix,
    "u_ref_times": parse_vector, "u_ref_values": parse_matrix,
}

_CONSTRAINT_KEYS = {
    "kind": parse_str, "phase": parse_str, "lb": parse_vector, "ub": parse_vector,
    "C": parse_matrix, "D": parse_matrix, "e": parse_vector,
}


@dataclass
class ProblemConfig:
    """Parsed config: raw per-section key/value dicts plus the source path."""

    path: str = "<string>"
    model: dict = field(default_factory=dict)
    x0: np.ndarray | None = None
    cost_terms: list = field(default_factory=list)        # (section, dict)
    constraint_terms: list = field(default_factory=list)  # (section, dict)
    solver: dict = field(default_factory=dict)
    mpc: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    lqr: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def require(self, section):
        found = {
            "model": self.model, "initial_state": self.x0,
            "solver": self.solver, "mpc": self.mpc,
            "integrator": self.integrator, "lqr": self.lqr,
        }[section]
        if found is None or (isinstance(found, dict) and not found):
            raise ValidationError(f"missing required section [{section}]",
                                  section=section)


def _read_ini(source):
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        if isinstance(source, str) and ("\n" in source or "=" in source
                                        and not os.path.exists(source)):
            parser.read_file(io.StringIO(source), source="<string>")
        else:
            if not os.path.exists(source):
                raise ParseError(f"config file not found: {source}")
            with open(source) as fh:
                parser.read_file(fh, source=str(source))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ParseError(f"config syntax error: {exc}", line=line)
    return parser


def _parse_section(section, raw, keymap, extras_ok=False):
    out = {}
    for key, text in raw.items():
        if key in keymap:
            out[key] = keymap[key](text, section, key)
        elif extras_ok:
            out[key] = parse_scalar(text, section, key)
        else:
            raise ValidationError(f"unknown key {key!r} in section [{section}]",
                                  section=section, key=key)
    return out


def parse_config(source):
    """Parse a config file (or literal INI text) into a ProblemConfig."""
    parser = _read_ini(source)
    cfg = ProblemConfig(path=str(source) if os.path.exists(str(source)) else "<string>")
    for section in parser.sections():
        raw = dict(parser.items(section))
        if section == "model":
            cfg.model = _parse_section(section, raw, _SCHEMA["model"], extras_ok=True)
            if "name" not in cfg.model:
                raise ValidationError("[model] needs a name", section="model", key="name")
        elif section == "initial_state":
            vals = _parse_section(section, raw, _SCHEMA["initial_state"])
            if "x0" not in vals:
                raise ValidationError("[initial_state] needs x0",
                                      section="initial_state", key="x0")
            cfg.x0 = vals["x0"]
        elif section == "cost" or section.startswith("cost."):
            if section == "cost":
                if raw:
                    raise ValidationError(
                        "[cost] holds no keys; put terms in [cost.termK]",
                        section="cost")
                continue
            cfg.cost_terms.append((section, _parse_section(section, raw, _COST_KEYS)))
        elif section == "constraints" or section.startswith("constraints."):
            if section == "constraints":
                if raw:
                    raise ValidationError(
                        "[constraints] holds no keys; put terms in [constraints.termK]",
                        section="constraints")
                continue
            cfg.constraint_terms.append(
                (section, _parse_section(section, raw, _CONSTRAINT_KEYS)))
        elif section in _SCHEMA:
            setattr(cfg, section, _parse_section(section, raw, _SCHEMA[section]))
        else:
            raise ValidationError(f"unknown section [{section}]", section=section)
    return cfg


# -- builders ---------------------------------------------------------------

def build_system(cfg):
    cfg.require("model")
    name = cfg.model["name"]
    overrides = {k: v for k, v in cfg.model.items() if k != "name"}
    try:
        return _models.by_name(name, **overrides)
    except ConfigurationError as exc:
        raise ValidationError(str(exc), section="model", key="name")


def _term_matrix(spec, key, section, dim, what):
    if key not in spec:
        raise ValidationError(f"[{section}] misses required key {key!r}",
                              section=section, key=key)
    M = spec[key]
    if dim is not None and M.shape != (dim, dim):
        raise ValidationError(
            f"{section}.{key}: {what} weight has shape {M.shape}, expected "
            f"({dim}, {dim})", section=section, key=key)
    return M


_REQUIRED = object()


def _term_vector(spec, key, section, dim, default=_REQUIRED):
    if key not in spec:
        if default is _REQUIRED:
            raise ValidationError(f"[{section}] misses required key {key!r}",
                                  section=section, key=key)
        return default
    v = spec[key]
    if dim is not None and v.shape[0] != dim:
        raise ValidationError(
            f"{section}.{key}: dimension {v.shape[0]}, expected {dim}",
            section=section, key=key)
    return v


def _build_term(section, spec, n, m):
    kind = spec.get("kind")
    if kind is None:
        raise ValidationError(f"[{section}] misses required key 'kind'",
                              section=section, key="kind")
    window = {"t_on": spec.get("t_on"), "t_off": spec.get("t_off")}
    try:
        if kind == "quadratic":
            return _cost.QuadraticTerm(
                Q=_term_matrix(spec, "Q", section, n, "state"),
                R=_term_matrix(spec, "R", section, m, "control"),
                x_ref=_term_vector(spec, "x_ref", section, n, None),
                u_ref=_term_vector(spec, "u_ref", section, m, None),
                **window)
        if kind == "linear":
            return _cost.LinearTerm(
                a=_term_vector(spec, "a", section, n),
                b=_term_vector(spec, "b", section, m), **window)
        if kind == "mixed":
            P = spec.get("P")
            if P is None:
                raise ValidationError(f"[{section}] misses required key 'P'",
                                      section=section, key="P")
            if n is not None and P.shape != (m, n):
                raise ValidationError(
                    f"{section}.P: shape {P.shape}, expected ({m}, {n})",
                    section=section, key="P")
            return _cost.MixedTerm(
                P=P, x_ref=_term_vector(spec, "x_ref", section, n, None),
                u_ref=_term_vector(spec, "u_ref", section, m, None),
                **window)
        if kind == "quad_tracking":
            for key in ("x_ref_times", "x_ref_values", "u_ref_times", "u_ref_values"):
                if key not in spec:
                    raise ValidationError(f"[{section}] misses required key {key!r}",
                                          section=section, key=key)
            return _cost.QuadTrackingTerm(
                Q=_term_matrix(spec, "Q", section, n, "state"),
                R=_term_matrix(spec, "R", section, m, "control"),
                x_ref_traj=DiscreteTrajectory(spec["x_ref_times"],
                                              spec["x_ref_values"], ZOH),
                u_ref_traj=DiscreteTrajectory(spec["u_ref_times"],
                                              spec["u_ref_values"], ZOH),
                **window)
        if kind == "state_barrier":
            if "alpha" not in spec:
                raise ValidationError(f"[{section}] misses required key 'alpha'",
                                      section=section, key="alpha")
            return _cost.StateBarrierTerm(
                lb=_term_vector(spec, "lb", section, n),
                ub=_term_vector(spec, "ub", section, n),
                alpha=spec["alpha"], **window)
    except ConfigurationError as exc:
        raise ValidationError(f"{section}: {exc}", section=section)
    raise ValidationError(f"{section}.kind: unknown term kind {kind!r}",
                          section=section, key="kind")


def build_cost(cfg, state_dim, control_dim):
    """CostFunction from the [cost.termK] sections (sorted by section name)."""
    cf = _cost.CostFunction()
    for section, spec in sorted(cfg.cost_terms, key=lambda kv: kv[0]):
        role = spec.get("role", "intermediate")
        if role not in ("intermediate", "final"):
            raise ValidationError(f"{section}.role: unknown role {role!r}",
                                  section=section, key="role")
        term = _build_term(section, spec, state_dim, control_dim)
        try:
            if role == "final":
                cf.add_final(term)
            else:
                cf.add_intermediate(term)
        except ConfigurationError as exc:
            raise ValidationError(f"{section}: {exc}", section=section)
    return cf


def build_constraints(cfg, state_dim, control_dim):
    if not cfg.constraint_terms:
        return None
    cc = ConstraintContainer()
    for section, spec in sorted(cfg.constraint_terms, key=lambda kv: kv[0]):
        kind = spec.get("kind")
        phase = spec.get("phase", "intermediate")
        if phase not in ("intermediate", "terminal"):
            raise ValidationError(f"{section}.phase: unknown phase {phase!r}",
                                  section=section, key="phase")
        try:
            if kind == "control_box":
                term = ControlBoxConstraint(
                    lb=_term_vector(spec, "lb", section, None),
                    ub=_term_vector(spec, "ub", section, None))
                if term.dim > control_dim:
                    raise ValidationError(
                        f"{section}: box dimension {term.dim} exceeds control "
                        f"dimension {control_dim}", section=section)
            elif kind == "state_box":
                term = StateBoxConstraint(
                    lb=_term_vector(spec, "lb", section, None),
                    ub=_term_vector(spec, "ub", section, None))
                if term.dim > state_dim:
                    raise ValidationError(
                        f"{section}: box dimension {term.dim} exceeds state "
                        f"dimension {state_dim}", section=section)
            elif kind == "linear_path":
                C = spec.get("C")
                if C is None:
                    raise ValidationError(f"[{section}] misses required key 'C'",
                                          section=section, key="C")
                if C.shape[1] != state_dim:
                    raise ValidationError(
                        f"{section}.C: {C.shape[1]} columns, expected {state_dim}",
                        section=section, key="C")
                D = spec.get("D", np.zeros((C.shape[0], control_dim)))
                if D.shape != (C.shape[0], control_dim):
                    raise ValidationError(
                        f"{section}.D: shape {D.shape}, expected "
                        f"({C.shape[0]}, {control_dim})", section=section, key="D")
                term = LinearPathConstraint(
                    C=C, D=D,
                    e=_term_vector(spec, "e", section, C.shape[0],
                                   np.zeros(C.shape[0])),
                    lb=_term_vector(spec, "lb", section, C.shape[0]),
                    ub=_term_vector(spec, "ub", section, C.shape[0]))
            else:
                raise ValidationError(f"{section}.kind: unknown kind {kind!r}",
                                      section=section, key="kind")
            if phase == "terminal":
                cc.add_terminal(term)
            else:
                cc.add_intermediate(term)
        except ConfigurationError as exc:
            raise ValidationError(f"{section}: {exc}", section=section)
    return cc


def build_nloc_settings(cfg, workers=None):
    cfg.require("solver")
    s = dict(cfg.solver)
    if "T" not in s:
        raise ValidationError("[solver] needs horizon T", section="solver", key="T")
    if s["T"] <= 0:
        raise ValidationError("[solver] horizon T must be positive",
                              section="solver", key="T")
    s.pop("T")
    kwargs = {}
    rename = {"line_search_alphas": "alphas"}
    for key, val in s.items():
        kwargs[rename.get(key, key)] = val
    if "alphas" in kwargs:
        kwargs["alphas"] = tuple(kwargs["alphas"])
    lb = kwargs.pop("u_clamp_lb", None)
    ub = kwargs.pop("u_clamp_ub", None)
    if (lb is None) != (ub is None):
        raise ValidationError("u_clamp_lb and u_clamp_ub must come together",
                              section="solver", key="u_clamp_lb")
    if lb is not None:
        kwargs["u_clamp"] = (lb, ub)
    if workers is not None:
        kwargs["workers"] = workers
    try:
        return NLOCSettings(**kwargs)
    except (TypeError, ConfigurationError) as exc:
        raise ValidationError(f"[solver]: {exc}", section="solver")


def build_problem(cfg, workers=None):
    """(OptConProblem, NLOCSettings) from a full solve config."""
    from .nloc import OptConProblem
    system = build_system(cfg)
    if cfg.x0 is None:
        raise ValidationError("missing required section [initial_state]",
                              section="initial_state")
    if cfg.x0.shape[0] != system.state_dim:
        raise ValidationError(
            f"initial_state.x0: dimension {cfg.x0.shape[0]}, model has "
            f"{system.state_dim}", section="initial_state", key="x0")
    cost_fn = build_cost(cfg, system.state_dim, system.control_dim)
    constraints = build_constraints(cfg, system.state_dim, system.control_dim)
    settings = build_nloc_settings(cfg, workers=workers)
    problem = OptConProblem(system=system, cost=cost_fn, x0=cfg.x0,
                            T=cfg.solver["T"], constraints=constraints)
    return problem, settings


def build_integrator_settings(cfg):
    from .integrate import SCHEMES
    cfg.require("integrator")
    s = dict(cfg.integrator)
    t0 = s.pop("t0", 0.0)
    t1 = s.pop("t1", None)
    u = s.pop("u", None)
    if "scheme" in s and s["scheme"] not in SCHEMES:
        raise ParseError(
            f"[integrator] unknown scheme {s['scheme']!r}; one of {SCHEMES}",
            section="integrator")
    try:
        settings = IntegratorSettings(**s)
    except (TypeError, ConfigurationError) as exc:
        raise ValidationError(f"[integrator]: {exc}", section="integrator")
    return settings, t0, t1, u


def build_mpc_settings(cfg):
    cfg.require("mpc")
    s = dict(cfg.mpc)
    control_dt = s.pop("control_dt", None)
    t_end = s.pop("t_end", None)
    disturbance = s.pop("disturbance", None)
    plant_substeps = s.pop("plant_substeps", 10)
    try:
        settings = MpcSettings(**s)
    except (TypeError, ConfigurationError) as exc:
        raise ValidationError(f"[mpc]: {exc}", section="mpc")
    return settings, control_dt, t_end, disturbance, plant_substeps


def load_costfunction(source, state_dim=None, control_dim=None):
    """CostFunction from INI text or a path containing [cost.termK] sections.

    Without model context, dimension errors inside a term raise ParseError
    naming the section.
    """
    cfg = parse_config(source)
    try:
        return build_cost(cfg, state_dim, control_dim)
    except ValidationError as exc:
        if state_dim is None and control_dim is None:
            raise ParseError(str(exc), section=exc.section)
        raise
