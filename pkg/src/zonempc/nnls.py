"""Non-negative least squares by the Lawson-Hanson active-set method.

Solves min ||A x - b||_2 subject to x >= 0 with exact termination on the KKT
conditions. Kept dependency-free so the brute-force active-set oracle in the
test suite stays a genuinely independent check.
"""

from __future__ import annotations

import numpy as np

from .errors import MaxIterationsExceeded

KKT_TOL = 1e-8


def nnls(A, b, max_iter: int | None = None) -> np.ndarray:
    """Lawson-Hanson iteration.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    max_iter : int, optional
        Inner-loop cap; defaults to 10 * n.

    Returns
    -------
    x : (n,) ndarray
        The non-negative minimizer. Complementary slackness holds to KKT_TOL:
        with g = A^T (A x - b), coordinates at zero satisfy g_i >= -KKT_TOL
        and positive coordinates satisfy |g_i| <= KKT_TOL.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * n

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b  # negative gradient at x = 0

    def solve_passive() -> np.ndarray:
        z = np.zeros(n)
        if passive.any():
            sol, *_ = np.linalg.lstsq(A[:, passive], b, rcond=None)
            z[passive] = sol
        return z

    iters = 0
    while True:
        candidates = np.where(passive, -np.inf, w)
        if candidates.max(initial=-np.inf) <= KKT_TOL:
            return x
        passive[int(np.argmax(candidates))] = True

        z = solve_passive()
        while z[passive].min(initial=np.inf) <= 0.0:
            iters += 1
            if iters > max_iter:
                raise MaxIterationsExceeded(f"nnls did not converge in {max_iter} iterations")
            # walk from x toward z until the first passive coordinate hits zero
            mask = passive & (z <= 0.0)
            denom = x[mask] - z[mask]
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios = np.where(denom > 0.0, x[mask] / denom, 0.0)
            step = ratios.min()
            x = x + step * (z - x)
            drop = passive & (np.abs(x) <= 1e-12 * max(1.0, np.abs(x).max()))
            passive[drop] = False
            x[~passive] = 0.0
            z = solve_passive()

        x = z
        w = A.T @ (b - A @ x)
