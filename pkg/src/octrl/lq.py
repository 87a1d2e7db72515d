"""Linear-quadratic machinery: the LQOC problem container, CARE/DARE
solvers, finite-horizon time-varying LQR, and the Gauss-Newton Riccati
sweep with fixed Hessian regularization.

Conventions (used consistently by the shooting solvers):

* An :class:`LQOCProblem` stores true gradients and Hessians of the
  discretized cost; the subproblem minimized over increments is

      sum_n  q_x[n]' dx_n + q_u[n]' du_n + 1/2 dx_n' Q[n] dx_n
             + 1/2 du_n' R[n] du_n + du_n' P[n] dx_n
      + q_x[N]' dx_N + 1/2 dx_N' Q[N] dx_N

  subject to dx_{n+1} = A[n] dx_n + B[n] du_n + d[n],  dx_0 = 0.

* Defects are d_n = (rollout endpoint of interval n) - x_{n+1}, so a full
  Newton step closes multiple-shooting gaps exactly for linear dynamics.

* ``solve_care``/``solve_dare``/``solve_fhdtlqr`` return gains in the
  textbook sign, u = -K x. The :class:`RiccatiSolution` of the sweep folds
  the stabilizing sign in: the update is u = u_prev + u_ff_delta + K dx,
  i.e. its K equals minus the FHDTLQR gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConfigurationError, ConvergenceFault, RegularizationFault,
                     SingularityFault)


def _sym(M):
    return 0.5 * (M + M.T)


@dataclass
class LQOCProblem:
    """Matrix-form linear-quadratic optimal-control problem over N stages."""

    A: np.ndarray          # (N, n, n)
    B: np.ndarray          # (N, n, m)
    q: np.ndarray          # (N+1,)
    q_x: np.ndarray        # (N+1, n)
    q_u: np.ndarray        # (N, m)
    Q: np.ndarray          # (N+1, n, n)
    R: np.ndarray          # (N, m, m)
    P: np.ndarray          # (N, m, n)
    d: np.ndarray          # (N, n)
    u_lb: np.ndarray | None = None
    u_ub: np.ndarray | None = None

    def __post_init__(self):
        N, n, m = self.A.shape[0], self.A.shape[1], self.B.shape[2]
        expect = {
            "A": (N, n, n), "B": (N, n, m), "q": (N + 1,), "q_x": (N + 1, n),
            "q_u": (N, m), "Q": (N + 1, n, n), "R": (N, m, m), "P": (N, m, n),
            "d": (N, n),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigurationError(
                    f"LQOCProblem.{name} has shape {arr.shape}, expected {shape}")

    @classmethod
    def zeros(cls, N, n, m):
        return cls(
            A=np.zeros((N, n, n)), B=np.zeros((N, n, m)), q=np.zeros(N + 1),
            q_x=np.zeros((N + 1, n)), q_u=np.zeros((N, m)),
            Q=np.zeros((N + 1, n, n)), R=np.zeros((N, m, m)),
            P=np.zeros((N, m, n)), d=np.zeros((N, n)))

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def state_dim(self):
        return self.A.shape[1]

    @property
    def control_dim(self):
        return self.B.shape[2]

    def defect_l1(self):
        return float(np.sum(np.abs(self.d)))


@dataclass
class RiccatiSolution:
    """Backward-sweep output: feedforward increments, feedback gains,
    cost-to-go Hessians, the planned increment trajectory, and the expected
    cost decrease split (dV1, dV2); expected change at step alpha is
    alpha*dV1 + alpha^2*dV2."""

    u_ff_delta: np.ndarray   # (N, m)
    K: np.ndarray            # (N, m, n)
    S: np.ndarray            # (N+1, n, n)
    dx: np.ndarray           # (N+1, n)
    du: np.ndarray           # (N, m)
    dV1: float
    dV2: float
    reg_lambda: float = 0.0

    @property
    def expected_cost_decrease(self):
        return (self.dV1, self.dV2)

    def expected_decrease(self, alpha=1.0):
        return -(alpha * self.dV1 + alpha * alpha * self.dV2)


def care_residual(A, B, Q, R, P):
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def dare_residual(A, B, Q, R, P):
    M = R + B.T @ P @ B
    return A.T @ P @ A - P - (A.T @ P @ B) @ np.linalg.solve(M, B.T @ P @ A) + Q


def solve_care(A, B, Q, R, dt=0.1, tol=1e-9, max_iters=200_000):
    """Continuous-time algebraic Riccati equation, iterative solver.

    Integrates the differential Riccati equation
        dP/ds = A' P + P A - P B R^-1 B' P + Q
    (reverse time) with RK4 from P = Q until the per-step change drops
    below ``tol``; the algebraic residual of the result is checked against
    10*tol. Diverging integrations retry with a 5x smaller step.
    Returns (P, K) with K = R^-1 B' P.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Rinv = np.linalg.inv(R)

    def flow(P):
        return A.T @ P + P @ A - P @ B @ Rinv @ B.T @ P + Q

    h = float(dt)
    last_metric = np.inf
    for _attempt in range(8):
        P = Q.copy()
        diverged = False
        for _ in range(max_iters):
            k1 = flow(P)
            k2 = flow(P + 0.5 * h * k1)
            k3 = flow(P + 0.5 * h * k2)
            k4 = flow(P + h * k3)
            dP = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            P = _sym(P + dP)
            if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e14:
                diverged = True
                break
            last_metric = float(np.max(np.abs(dP)))
            if last_metric < tol:
                # the DRE fixed point satisfies the algebraic equation; keep
                # integrating until the residual itself clears the gate
                res = float(np.max(np.abs(care_residual(A, B, Q, R, P))))
                if res < 10.0 * tol:
                    return P, Rinv @ B.T @ P
        if not diverged:
            raise ConvergenceFault(
                f"CARE integration did not settle within {max_iters} steps",
                residual=last_metric)
        h /= 5.0
    raise ConvergenceFault("CARE integration diverged for all attempted step sizes")


def solve_dare(A, B, Q, R, tol=1e-12, max_iters=100_000):
    """Discrete-time algebraic Riccati equation by fixed-point iteration.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA from P = Q until the
    max-abs change drops below ``tol``. Returns (P, K) with
    K = (R + B'PB)^-1 B'PA (textbook sign, u = -K x).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    delta = np.inf
    for _ in range(max_iters):
        BtP = B.T @ P
        M = R + BtP @ B
        try:
            K = np.linalg.solve(M, BtP @ A)
        except np.linalg.LinAlgError as exc:
            raise SingularityFault(f"singular control Hessian in DARE iteration: {exc}")
        P_new = _sym(Q + A.T @ P @ A - (A.T @ BtP.T) @ K)
        delta = float(np.max(np.abs(P_new - P)))
        P = P_new
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e12:
            raise ConvergenceFault("DARE iteration diverged (system not stabilizable?)",
                                   residual=delta)
        if delta < tol:
            M = R + B.T @ P @ B
            K = np.linalg.solve(M, B.T @ P @ A)
            res = float(np.max(np.abs(dare_residual(A, B, Q, R, P))))
            if res >= 10.0 * max(tol, 1e-12):
                raise ConvergenceFault(
                    f"DARE fixed point residual {res:.3e} too large", residual=res)
            return P, K
    raise ConvergenceFault(f"DARE did not converge within {max_iters} iterations",
                           residual=delta)


def solve_fhdtlqr(A_seq, B_seq, Q_seq, R_seq, P_seq=None, Q_final=None):
    """Finite-horizon discrete-time time-varying LQR backward recursion.

        S_N = Q_final
        K_n = (R_n + B_n' S_{n+1} B_n)^-1 (B_n' S_{n+1} A_n + P_n)
        S_n = Q_n + A_n' S_{n+1} A_n - K_n' (R_n + B_n' S_{n+1} B_n) K_n

    Returns (K, S): gains in textbook sign (u = -K x) and cost-to-go
    Hessians S[0..N] (symmetrized each step).
    """
    A_seq = np.asarray(A_seq, dtype=float)
    B_seq = np.asarray(B_seq, dtype=float)
    Q_seq = np.asarray(Q_seq, dtype=float)
    R_seq = np.asarray(R_seq, dtype=float)
    N, n, m = A_seq.shape[0], A_seq.shape[1], B_seq.shape[2]
    if P_seq is None:
        P_seq = np.zeros((N, m, n))
    if Q_final is None:
        raise ConfigurationError("Q_final is required")
    K = np.zeros((N, m, n))
    S = np.zeros((N + 1, n, n))
    S[N] = _sym(np.asarray(Q_final, dtype=float))
    for i in range(N - 1, -1, -1):
        Snext = S[i + 1]
        H = R_seq[i] + B_seq[i].T @ Snext @ B_seq[i]
        G = B_seq[i].T @ Snext @ A_seq[i] + P_seq[i]
        try:
            K[i] = np.linalg.solve(H, G)
        except np.linalg.LinAlgError as exc:
            raise SingularityFault(f"singular stage Hessian at stage {i}: {exc}",
                                   stage=i)
        S[i] = _sym(Q_seq[i] + A_seq[i].T @ Snext @ A_seq[i] - K[i].T @ H @ K[i])
    return K, S


def _chol_pd(H):
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


def gn_riccati_solve(p, reg_lambda=1e-6, reg_lambda_max=1e6):
    """Backward Riccati sweep over an affine LQ problem with defects,
    followed by the increment forward pass.

    Stage control Hessians that fail a Cholesky check are regularized by
    adding lambda*I, retrying with 10x lambda up to ``reg_lambda_max``
    (fixed Hessian regularization). Cost-to-go propagation uses the exact
    expressions for the possibly-regularized gains, so the sweep stays a
    valid policy evaluation even when regularized.
    """
    N, n, m = p.N, p.state_dim, p.control_dim
    S = np.zeros((N + 1, n, n))
    s_vec = np.zeros((N + 1, n))
    K = np.zeros((N, m, n))
    l_ff = np.zeros((N, m))
    S[N] = _sym(p.Q[N])
    s_vec[N] = p.q_x[N]
    dV1 = 0.0
    dV2 = 0.0
    lam_used = 0.0
    for i in range(N - 1, -1, -1):
        A, B, d = p.A[i], p.B[i], p.d[i]
        Snext, snext = S[i + 1], s_vec[i + 1]
        H = _sym(p.R[i] + B.T @ Snext @ B)
        lam = 0.0
        Hreg = H
        while not _chol_pd(Hreg):
            lam = reg_lambda if lam == 0.0 else lam * 10.0
            if lam > reg_lambda_max:
                raise RegularizationFault(
                    f"stage {i}: regularization exceeded {reg_lambda_max:g}")
            Hreg = H + lam * np.eye(m)
        lam_used = max(lam_used, lam)
        Sd_s = Snext @ d + snext
        G = p.P[i] + B.T @ Snext @ A
        g = p.q_u[i] + B.T @ Sd_s
        K[i] = -np.linalg.solve(Hreg, G)
        l_ff[i] = -np.linalg.solve(Hreg, g)
        # exact propagation for the chosen (possibly regularized) gains
        Hl_g = H @ l_ff[i] + g
        S[i] = _sym(p.Q[i] + A.T @ Snext @ A + K[i].T @ H @ K[i]
                    + G.T @ K[i] + K[i].T @ G)
        s_vec[i] = p.q_x[i] + A.T @ Sd_s + G.T @ l_ff[i] + K[i].T @ Hl_g
        dV1 += float(g.dot(l_ff[i]))
        dV2 += 0.5 * float(l_ff[i].dot(H @ l_ff[i]))
    dx = np.zeros((N + 1, n))
    du = np.zeros((N, m))
    for i in range(N):
        du[i] = l_ff[i] + K[i] @ dx[i]
        dx[i + 1] = p.A[i] @ dx[i] + p.B[i] @ du[i] + p.d[i]
    return RiccatiSolution(u_ff_delta=l_ff, K=K, S=S, dx=dx, du=du,
                           dV1=dV1, dV2=dV2, reg_lambda=lam_used)
