import numpy as np
import pytest

from dctrack.assign import solve, solve_bruteforce
from dctrack.errors import Infeasible, SizeExceeded

INF = np.inf


def random_instance(rng, n, forbid_prob=0.2):
    """Random costs with forbidden cells but a guaranteed feasible diagonal."""
    mat = rng.random((n, n))
    forbidden = rng.random((n, n)) < forbid_prob
    np.fill_diagonal(forbidden, False)
    mat[forbidden] = INF
    return mat


def test_diagonal_zero():
    res = solve(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert res.y.tolist() == [0, 1]
    assert res.total_cost == 0.0


def test_forbidden_off_diagonal():
    mat = np.array([[5.0, INF], [INF, 5.0]])
    res = solve(mat)
    assert res.y.tolist() == [0, 1]
    assert res.total_cost == 10.0


def test_one_by_one():
    assert solve_bruteforce([[3.5]]).total_cost == 3.5
    assert solve([[3.5]]).total_cost == 3.5


def test_matches_bruteforce_random():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 8))
        mat = random_instance(rng, n)
        assert solve(mat).total_cost == pytest.approx(
            solve_bruteforce(mat).total_cost, abs=0
        )


def test_never_selects_forbidden():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        mat = random_instance(rng, n, forbid_prob=0.4)
        res = solve(mat)
        assert np.all(np.isfinite(mat[np.arange(n), res.y]))


def test_row_column_shift_keeps_argmin():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        mat = rng.random((n, n))
        base = solve(mat)
        shifted = mat.copy()
        row = int(rng.integers(0, n))
        col = int(rng.integers(0, n))
        c1, c2 = rng.normal(size=2)
        shifted[row, :] += c1
        shifted[:, col] += c2
        res = solve(shifted)
        # the shifted optimum is an optimum of the original problem too
        orig_cost = float(mat[np.arange(n), res.y].sum())
        assert orig_cost == pytest.approx(base.total_cost, abs=1e-9)


def test_infeasible_raises():
    mat = np.array([[INF, INF], [1.0, 1.0]])
    with pytest.raises(Infeasible):
        solve(mat)
    with pytest.raises(Infeasible):
        solve_bruteforce(mat)


def test_bruteforce_size_guard():
    with pytest.raises(SizeExceeded):
        solve_bruteforce(np.zeros((10, 10)))


def test_bad_matrix_rejected():
    with pytest.raises(ValueError):
        solve(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        solve(np.array([[np.nan, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        solve(np.array([[-np.inf, 0.0], [0.0, 0.0]]))


def test_deterministic():
    rng = np.random.default_rng(5)
    mat = rng.integers(0, 3, size=(6, 6)).astype(float)  # many ties
    first = solve(mat)
    for _ in range(5):
        again = solve(mat)
        assert np.array_equal(first.y, again.y)


def test_bruteforce_lexicographic_ties():
    # all-equal costs: the lexicographically smallest permutation wins
    res = solve_bruteforce(np.ones((4, 4)))
    assert res.y.tolist() == [0, 1, 2, 3]
