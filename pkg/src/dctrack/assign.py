"""Exact minimum-cost perfect matching on square matrices with forbidden cells.

Forbidden cells are ``np.inf`` entries, handled natively by the solver (never
big-M surrogates, which would corrupt learned-cost comparisons). ``solve`` is
backed by scipy's Jonker-Volgenant implementation; ``solve_bruteforce`` is an
independent enumeration oracle used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import Infeasible, SizeExceeded

BRUTE_FORCE_LIMIT = 9

_perm_cache: dict = {}


@dataclass(frozen=True)
class MatchResult:
    y: np.ndarray  # y[i] = column assigned to row i
    total_cost: float


def _check_matrix(cost) -> np.ndarray:
    mat = np.asarray(cost, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {mat.shape}")
    if mat.shape[0] < 1:
        raise ValueError("cost matrix must be at least 1x1")
    if np.any(np.isnan(mat)) or np.any(np.isneginf(mat)):
        raise ValueError("cost matrix entries must be finite or +inf")
    return mat


def solve(cost) -> MatchResult:
    """Globally optimal perfect matching avoiding +inf cells.

    Raises Infeasible when every perfect matching crosses a forbidden cell
    (which signals a malformed block layout upstream).
    """
    mat = _check_matrix(cost)
    try:
        rows, cols = linear_sum_assignment(mat)
    except ValueError as exc:
        if "infeasible" in str(exc):
            raise Infeasible("no perfect matching avoids the forbidden cells") from exc
        raise
    y = np.empty(mat.shape[0], dtype=int)
    y[rows] = cols
    total = float(mat[rows, cols].sum())
    if not np.isfinite(total):
        raise Infeasible("matching crossed a forbidden cell")
    return MatchResult(y=y, total_cost=total)


def _all_permutations(n: int) -> np.ndarray:
    if n not in _perm_cache:
        _perm_cache[n] = np.array(list(permutations(range(n))), dtype=int)
    return _perm_cache[n]


def solve_bruteforce(cost) -> MatchResult:
    """Exhaustive oracle (n <= 9). Ties break to the lexicographically lowest y."""
    mat = _check_matrix(cost)
    n = mat.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise SizeExceeded(f"brute force limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    perms = _all_permutations(n)
    totals = mat[np.arange(n), perms].sum(axis=1)
    best = int(np.argmin(totals))  # permutations are generated in lex order
    if not np.isfinite(totals[best]):
        raise Infeasible("no perfect matching avoids the forbidden cells")
    return MatchResult(y=perms[best].copy(), total_cost=float(totals[best]))
