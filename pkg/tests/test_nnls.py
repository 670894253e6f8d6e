import numpy as np
import pytest
from itertools import combinations

from zonempc.errors import MaxIterationsExceeded
from zonempc.nnls import nnls


def oracle_nnls(A, b):
    """Exhaustive search over active sets: solve every equality-restricted
    least-squares subproblem, keep the best feasible candidate."""
    n = A.shape[1]
    best_obj, best_x = np.inf, np.zeros(n)
    for size in range(n + 1):
        for passive in combinations(range(n), size):
            x = np.zeros(n)
            if passive:
                sol, *_ = np.linalg.lstsq(A[:, list(passive)], b, rcond=None)
                x[list(passive)] = sol
            if x.min(initial=0.0) < 0.0:
                continue
            r = A @ x - b
            obj = float(r @ r)
            if obj < best_obj - 1e-15:
                best_obj, best_x = obj, x
    return best_obj, best_x


def test_clamps_negative_component():
    x = nnls(np.eye(2), np.array([1.0, -2.0]))
    assert np.allclose(x, [1.0, 0.0])


def test_interior_solution_equals_ols():
    x = nnls(np.eye(2), np.array([3.0, 4.0]))
    assert np.allclose(x, [3.0, 4.0])


def test_random_problems_match_oracle():
    rng = np.random.default_rng(101)
    for _ in range(50):
        m = int(rng.integers(4, 10))
        n = int(rng.integers(2, 4))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        x = nnls(A, b)
        obj = float(np.sum((A @ x - b) ** 2))
        obj_oracle, _ = oracle_nnls(A, b)
        assert obj <= obj_oracle + 1e-9
        assert obj >= obj_oracle - 1e-9


def test_complementary_slackness():
    rng = np.random.default_rng(7)
    for _ in range(50):
        A = rng.normal(size=(12, 6))
        b = rng.normal(size=12)
        x = nnls(A, b)
        g = A.T @ (A @ x - b)
        assert np.all(g[x <= 1e-12] >= -1e-8)
        assert np.max(np.abs(g[x > 1e-12]), initial=0.0) <= 1e-8


def test_iteration_cap():
    # collinear columns force restricted steps; with no budget the cap trips
    rng = np.random.default_rng(1)
    base = rng.normal(size=(10, 1))
    A = base + 0.1 * rng.normal(size=(10, 6))
    b = rng.normal(size=10) + base[:, 0]
    with pytest.raises(MaxIterationsExceeded):
        nnls(A, b, max_iter=0)
    x = nnls(A, b)  # default budget solves it
    g = A.T @ (A @ x - b)
    assert np.all(g[x <= 1e-12] >= -1e-8)


def test_zero_column_stays_zero():
    A = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    b = np.array([1.0, 2.0, 3.0])
    x = nnls(A, b)
    assert x[1] == 0.0
