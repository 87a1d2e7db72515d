"""Command-line front end.

    octrl solve     <config> [--workers N] [--out DIR] [--verbose]
    octrl mpc-sim   <config> [--workers N] [--out DIR] [--verbose]
    octrl lqr       <config> [--out DIR] [--verbose]
    octrl integrate <config> [--out DIR] [--verbose]

Exit codes: 0 converged/ok, 2 solver hit max iterations, 1 any fault or
invalid config. Numbers are printed with 17 significant digits so every
emitted CSV parses back to bit-identical float64 values. OCTRL_WORKERS
provides the default worker count.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as _config
from . import lq as _lq
from . import mpc as _mpc
from . import nloc as _nloc
from .core import ConstantController
from .errors import OctrlError, ValidationError
from .integrate import integrate, simulate_closed_loop

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_MAX_ITERATIONS = 2


def _fmt(x):
    return f"{float(x):.17g}"


def write_trajectory_csv(path, times, states, controls=None):
    """Trajectory CSV: header t,x0..x{n-1},u0..u{m-1}; rows beyond the last
    control (the final state row) leave the control cells empty."""
    states = np.asarray(states, dtype=float)
    n = states.shape[1]
    m = 0 if controls is None else np.asarray(controls).shape[1]
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)]
    lines = [",".join(header)]
    for k, t in enumerate(times):
        cells = [_fmt(t)] + [_fmt(v) for v in states[k]]
        if m:
            if controls is not None and k < len(controls):
                cells += [_fmt(v) for v in controls[k]]
            else:
                cells += [""] * m
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv: (times, states, controls)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        times, states, controls = [], [], []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            if len(cells) < 1 + n:
                continue
            times.append(float(cells[0]))
            states.append([float(c) for c in cells[1:1 + n]])
            ucells = cells[1 + n:1 + n + m]
            if m and all(c != "" for c in ucells):
                controls.append([float(c) for c in ucells])
    return (np.array(times), np.array(states),
            np.array(controls) if controls else np.zeros((0, m)))


def write_gains_csv(path, times, gains):
    """Gains CSV: one row per stage, gain matrix flattened row-major."""
    gains = np.asarray(gains, dtype=float)
    m, n = gains.shape[1], gains.shape[2]
    header = ["stage", "t"] + [f"k{i}{j}" for i in range(m) for j in range(n)]
    lines = [",".join(header)]
    for k, t in enumerate(times):
        cells = [str(k), _fmt(t)] + [_fmt(v) for v in gains[k].ravel()]
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_iteration_log(path, records, status):
    lines = ["iter  accepted  cost                     defect_l1                "
             "alpha      lambda"]
    for r in records:
        lines.append(
            f"{r.iteration:<5d} {str(r.accepted):<9s} {_fmt(r.cost):<24s} "
            f"{_fmt(r.defect_norm):<24s} {r.alpha:<10.6f} {r.reg_lambda:.3e}")
    lines.append(f"status: {status}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mpc_stats_csv(path, infos):
    lines = ["step,t,cost,defect,solve_ms,alpha"]
    for info in infos:
        lines.append(",".join([
            str(info.step), _fmt(info.t), _fmt(info.cost), _fmt(info.defect_norm),
            _fmt(info.solve_seconds * 1e3), _fmt(info.alpha)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _out_paths(cfg, args, *names):
    out_dir = args.out or cfg.output.get("dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    prefix = cfg.output.get("prefix")
    if not prefix:
        stem = os.path.splitext(os.path.basename(str(args.config)))[0]
        prefix = stem if stem and stem != "<string>" else "octrl"
    return [os.path.join(out_dir, f"{prefix}_{name}") for name in names]


def _solver_exit(sol):
    if sol.status == "converged":
        return EXIT_OK
    if sol.status == "max_iterations":
        return EXIT_MAX_ITERATIONS
    return EXIT_FAULT


def cmd_solve(cfg, args):
    problem, settings = _config.build_problem(cfg, workers=args.workers)
    sol = _nloc.solve(problem, settings)
    traj_path, gains_path, log_path = _out_paths(
        cfg, args, "trajectory.csv", "gains.csv", "iterations.log")
    write_trajectory_csv(traj_path, sol.x_traj.timestamps, sol.xs, sol.us)
    write_gains_csv(gains_path, sol.u_traj.timestamps, sol.gains)
    write_iteration_log(log_path, sol.iterations, sol.status)
    if args.verbose:
        for r in sol.iterations:
            print(f"iter {r.iteration}: cost={r.cost:.9g} defect={r.defect_norm:.3e} "
                  f"alpha={r.alpha:g} lambda={r.reg_lambda:.1e}")
    print(f"status: {sol.status}  cost: {_fmt(sol.cost)}  "
          f"defect_l1: {_fmt(sol.defect_norm)}  iterations: "
          f"{len(sol.accepted_iterations)}")
    print(f"wrote {traj_path}, {gains_path}, {log_path}")
    return _solver_exit(sol)


def cmd_mpc_sim(cfg, args):
    problem, settings = _config.build_problem(cfg, workers=args.workers)
    mpc_settings, control_dt, t_end, disturbance_path, plant_substeps = \
        _config.build_mpc_settings(cfg)
    if control_dt is None or control_dt <= 0:
        raise ValidationError("[mpc] needs control_dt > 0", section="mpc",
                              key="control_dt")
    if t_end is None or t_end <= problem.t0:
        raise ValidationError("[mpc] needs t_end beyond the start time",
                              section="mpc", key="t_end")
    disturbance = None
    if disturbance_path is not None:
        n_steps = int(round((t_end - problem.t0) / control_dt))
        base = os.path.dirname(os.path.abspath(str(args.config)))
        full = disturbance_path if os.path.isabs(disturbance_path) \
            else os.path.join(base, disturbance_path)
        disturbance = _mpc.load_disturbance_csv(full, n_steps, problem.system.state_dim)
    controller = _mpc.Mpc(problem, settings, mpc_settings)
    state_traj, control_traj, infos = _mpc.run_closed_loop(
        controller, problem.system, problem.x0, problem.t0, t_end, control_dt,
        disturbance=disturbance, plant_substeps=plant_substeps)
    cl_path, stats_path = _out_paths(cfg, args, "closedloop.csv", "mpc_stats.csv")
    write_trajectory_csv(cl_path, state_traj.timestamps, state_traj.values,
                         control_traj.values)
    write_mpc_stats_csv(stats_path, infos)
    degraded = sum(1 for i in infos if i.degraded)
    print(f"steps: {len(infos)}  degraded: {degraded}  "
          f"final_cost: {_fmt(infos[-1].cost)}")
    print(f"wrote {cl_path}, {stats_path}")
    return EXIT_OK if degraded == 0 else EXIT_FAULT


def cmd_lqr(cfg, args):
    cfg.require("lqr")
    spec = dict(cfg.lqr)
    mode = spec.pop("mode", "dare")
    if mode not in ("care", "dare"):
        raise ValidationError(f"[lqr] mode must be care or dare, got {mode!r}",
                              section="lqr", key="mode")
    for key in ("A", "B", "Q", "R"):
        if key not in spec:
            raise ValidationError(f"[lqr] needs {key}", section="lqr", key=key)
    kwargs = {}
    if "tol" in spec:
        kwargs["tol"] = spec["tol"]
    if "max_iters" in spec:
        kwargs["max_iters"] = spec["max_iters"]
    if mode == "care":
        if "dt" in spec:
            kwargs["dt"] = spec["dt"]
        P, K = _lq.solve_care(spec["A"], spec["B"], spec["Q"], spec["R"], **kwargs)
    else:
        P, K = _lq.solve_dare(spec["A"], spec["B"], spec["Q"], spec["R"], **kwargs)
    print(f"mode: {mode}")
    print("P:")
    for row in np.atleast_2d(P):
        print("  " + ", ".join(_fmt(v) for v in row))
    print("K:")
    for row in np.atleast_2d(K):
        print("  " + ", ".join(_fmt(v) for v in row))
    return EXIT_OK


def cmd_integrate(cfg, args):
    settings, t0, t1, u = _config.build_integrator_settings(cfg)
    if t1 is None or t1 <= t0:
        raise ValidationError("[integrator] needs t1 > t0", section="integrator",
                              key="t1")
    system = _config.build_system(cfg)
    if cfg.x0 is None:
        raise ValidationError("missing required section [initial_state]",
                              section="initial_state")
    if cfg.x0.shape[0] != system.state_dim:
        raise ValidationError(
            f"initial_state.x0: dimension {cfg.x0.shape[0]}, model has "
            f"{system.state_dim}", section="initial_state", key="x0")
    u_hold = np.zeros(system.control_dim) if u is None else u
    if u_hold.shape[0] != system.control_dim:
        raise ValidationError(
            f"integrator.u: dimension {u_hold.shape[0]}, model has "
            f"{system.control_dim}", section="integrator", key="u")
    system.attach_controller(ConstantController(u_hold))
    traj = integrate(system, cfg.x0, t0, t1, settings)
    (traj_path,) = _out_paths(cfg, args, "trajectory.csv")
    write_trajectory_csv(traj_path, traj.timestamps, traj.values)
    print(f"steps: {len(traj) - 1}  final: "
          + ", ".join(_fmt(v) for v in traj.values[-1]))
    print(f"wrote {traj_path}")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "mpc-sim": cmd_mpc_sim,
    "lqr": cmd_lqr,
    "integrate": cmd_integrate,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="octrl",
        description="Optimal-control toolkit: solve problems defined in text "
                    "config files.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("config", help="path to the problem config file")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel workers (default: OCTRL_WORKERS or config)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config.parse_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except OctrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
