"""Dense convex quadratic programming by operator splitting.

Problems are stated as

    minimize    0.5 x' P x + q' x
    subject to  A_eq x = b_eq
                l_in <= A_in x <= u_in

and solved with the standard splitting iteration: a regularized KKT solve,
projection of the constraint image onto its box, and a scaled dual update
with over-relaxation. Equality rows get a much stiffer penalty, matching
common practice. Everything is dense; the KKT inverse is formed once, which
is the right trade for the small receding-horizon problems this package
builds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterations, NonConvexCost

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 20000
PSD_TOL = 1e-8


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    l_in: np.ndarray
    u_in: np.ndarray
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.q)
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.P.shape != (n, n):
            raise ValueError("P must be square and match q")
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
        self.l_in = np.asarray(self.l_in, dtype=float)
        self.u_in = np.asarray(self.u_in, dtype=float)
        if np.any(self.l_in > self.u_in):
            raise ValueError("inequality bounds crossed")

    @property
    def n(self) -> int:
        return len(self.q)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float


def _check_psd(P: np.ndarray) -> np.ndarray:
    sym_err = np.abs(P - P.T).max(initial=0.0)
    scale = max(1.0, np.abs(P).max(initial=0.0))
    if sym_err > 1e-9 * scale:
        raise NonConvexCost("cost matrix is not symmetric")
    P = 0.5 * (P + P.T)
    if len(P) and np.linalg.eigvalsh(P).min() < -PSD_TOL * scale:
        raise NonConvexCost("cost matrix is not positive semidefinite")
    return P


def solve_qp(
    qp: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    rho: float = 0.1,
    sigma: float = 1e-6,
    alpha: float = 1.6,
) -> QpSolution:
    """Deterministic splitting iteration; terminates when both the primal
    residual ||Ax - z|| and the dual residual ||Px + q + A'y|| fall below
    ``tol`` (infinity norms, absolute + relative)."""
    P = _check_psd(qp.P)
    n = qp.n
    A = np.vstack([qp.A_eq, qp.A_in]) if qp.A_eq.size or qp.A_in.size else np.zeros((0, n))
    l = np.concatenate([qp.b_eq, qp.l_in])
    u = np.concatenate([qp.b_eq, qp.u_in])
    m = len(l)

    if m == 0:
        x = np.linalg.solve(P + sigma * np.eye(n), -qp.q)
        return QpSolution(x, qp.objective(x), 0, 0.0, float(np.abs(P @ x + qp.q).max(initial=0.0)))

    base_rho = rho
    eq_mask = np.zeros(m, dtype=bool)
    eq_mask[: len(qp.b_eq)] = True

    def factor(r):
        rv = np.full(m, r)
        rv[eq_mask] *= 1e3  # stiff equality rows
        return rv, np.linalg.inv(P + sigma * np.eye(n) + A.T @ (rv[:, None] * A))

    rho_vec, kkt_inv = factor(base_rho)

    x = np.zeros(n)
    z = np.clip(np.zeros(m), l, u)
    y = np.zeros(m)

    for it in range(1, max_iter + 1):
        rhs = sigma * x - qp.q + A.T @ (rho_vec * z - y)
        x_tilde = kkt_inv @ rhs
        ax_tilde = A @ x_tilde
        x = alpha * x_tilde + (1.0 - alpha) * x
        z_relaxed = alpha * ax_tilde + (1.0 - alpha) * z
        z_new = np.clip(z_relaxed + y / rho_vec, l, u)
        y = y + rho_vec * (z_relaxed - z_new)
        z = z_new

        if it % 25 == 0 or it == max_iter:
            ax = A @ x
            r_prim = np.abs(ax - z).max(initial=0.0)
            r_dual = np.abs(P @ x + qp.q + A.T @ y).max(initial=0.0)
            eps_prim = tol + tol * max(np.abs(ax).max(initial=0.0), np.abs(z).max(initial=0.0))
            eps_dual = tol + tol * max(
                np.abs(P @ x).max(initial=0.0),
                np.abs(qp.q).max(initial=0.0),
                np.abs(A.T @ y).max(initial=0.0),
            )
            if r_prim <= eps_prim and r_dual <= eps_dual:
                return QpSolution(x, qp.objective(x), it, float(r_prim), float(r_dual))
            # periodic residual balancing keeps the penalty useful on badly
            # scaled instances; fully deterministic
            if it % 200 == 0:
                ratio = (r_prim / max(eps_prim, 1e-30)) / max(r_dual / max(eps_dual, 1e-30), 1e-30)
                scale = float(np.sqrt(ratio))
                if scale > 5.0 or scale < 0.2:
                    base_rho = float(np.clip(base_rho * np.clip(scale, 1e-2, 1e2), 1e-6, 1e6))
                    rho_vec, kkt_inv = factor(base_rho)
    raise MaxIterations(f"splitting iteration did not converge in {max_iter} steps")
