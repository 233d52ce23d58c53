"""Rectangular linear-assignment solving.

Every attack stage reduces to one of these calls: patch-level similarity is
turned into an image-level score by a small assignment solve, and the final
image matching is one big solve. Minimization is the native objective;
maximizing a similarity matrix S is expressed as solve_assignment(-S).

solve_assignment returns the globally minimal assignment and breaks ties by
returning the lexicographically smallest mapping among all optima, so results
are deterministic regardless of backend or input ordering. The optimum set is
characterized through the dual potentials: an assignment is optimal iff it
uses only tight edges (zero reduced cost) and covers every column with a
strictly negative potential. The refinement does a greedy column choice per
row with matching-feasibility lookahead over the tight graph.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import SizeError, ValidationError

try:
    from . import _assign_c as _backend

    BACKEND = "compiled"
except ImportError:
    from . import _assign_py as _backend

    BACKEND = "python"

from . import _assign_py

# relative tolerance for detecting tight (zero reduced cost) edges
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Assignment:
    """mapping[i] = column assigned to row i; total_cost = sum of entries."""

    mapping: np.ndarray
    total_cost: float


def _check_costs(costs):
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-d, got shape {costs.shape}")
    n, m = costs.shape
    if n == 0 or m == 0:
        raise ValidationError("cost matrix must be non-empty")
    if n > m:
        raise ValidationError(f"need rows <= cols, got {n}x{m}; transpose or pad first")
    if not np.all(np.isfinite(costs)):
        raise ValidationError("cost matrix contains NaN or infinite entries")
    return costs


def _kuhn_saturates(adj, left_count, right_count, right_free):
    """Check that every left node can be matched into the free right nodes.

    adj: list of right-index arrays per left node. Classic augmenting-path
    matching; sizes here are tiny (<= a few hundred nodes).
    """
    match_right = np.full(right_count, -1, dtype=np.int64)

    def try_augment(l, seen):
        for r in adj[l]:
            if not right_free[r] or seen[r]:
                continue
            seen[r] = True
            if match_right[r] < 0 or try_augment(match_right[r], seen):
                match_right[r] = l
                return True
        return False

    for l in range(left_count):
        if not try_augment(l, np.zeros(right_count, dtype=bool)):
            return False
    return True


def _lex_refine(costs, u, v, tol):
    """Lexicographically smallest optimal mapping via greedy with lookahead.

    Any optimal assignment is a row-perfect matching in the tight graph that
    covers all negative-potential columns, and conversely (complementary
    slackness). A tentative row->column choice is kept iff the remaining rows
    can still be matched AND the remaining must-cover columns can still be
    covered; by the Mendelsohn-Dulmage theorem those two checks together
    guarantee a simultaneous completion.
    """
    n, m = costs.shape
    reduced = costs - u[:, None] - v[None, :]
    tight = reduced <= tol
    must_cover = v < -tol  # columns every optimum uses (rectangular case)

    row_adj = [np.flatnonzero(tight[i]) for i in range(n)]
    col_adj = [np.flatnonzero(tight[:, j]) for j in range(m)]

    mapping = np.full(n, -1, dtype=np.int64)
    col_used = np.zeros(m, dtype=bool)
    for i in range(n):
        for j in row_adj[i]:
            if col_used[j]:
                continue
            col_used[j] = True
            rows_left = np.arange(i + 1, n)
            rows_ok = _kuhn_saturates(
                [row_adj[r] for r in rows_left], n - i - 1, m, ~col_used
            )
            cols_left = [c for c in np.flatnonzero(must_cover) if not col_used[c]]
            row_free = np.zeros(n, dtype=bool)
            row_free[i + 1 :] = True
            cols_ok = _kuhn_saturates(
                [col_adj[c] for c in cols_left], len(cols_left), n, row_free
            )
            if rows_ok and cols_ok:
                mapping[i] = j
                break
            col_used[j] = False
        if mapping[i] < 0:  # pragma: no cover - duals from jv always admit one
            raise ValidationError("tight graph admits no completion; duals invalid")
    return mapping


def solve_assignment(costs):
    """Minimum-cost assignment of each row to a distinct column.

    Deterministic: among equal-cost optima the lexicographically smallest
    mapping (compare row 0's column first, then row 1's, ...) is returned.
    """
    costs = _check_costs(costs)
    n, m = costs.shape
    mapping, u, v = _backend.jv(costs)
    mapping = np.asarray(mapping, dtype=np.int64)

    scale = max(1.0, float(np.abs(costs).max()))
    tol = TIE_TOL * scale
    reduced = costs - np.asarray(u)[:, None] - np.asarray(v)[None, :]
    # rows with a unique tight column have a unique optimum; skip the greedy
    if np.any((reduced <= tol).sum(axis=1) > 1):
        mapping = _lex_refine(costs, np.asarray(u), np.asarray(v), tol)

    total = float(costs[np.arange(n), mapping].sum())
    return Assignment(mapping=mapping, total_cost=total)


def brute_force_assignment(costs):
    """Exhaustive reference solver, n <= 8. Same tie-break as solve_assignment."""
    costs = _check_costs(costs)
    n, m = costs.shape
    if n > 8:
        raise SizeError(f"brute force limited to 8 rows, got {n}")
    best_cost = np.inf
    best_perm = None
    rows = np.arange(n)
    for perm in permutations(range(m), n):
        c = costs[rows, perm].sum()
        if c < best_cost:  # ties keep the earlier, lexicographically smaller perm
            best_cost = c
            best_perm = perm
    return Assignment(
        mapping=np.array(best_perm, dtype=np.int64), total_cost=float(best_cost)
    )


def solve_assignment_python(costs):
    """Force the pure-Python kernel (used by backend-equivalence tests)."""
    costs = _check_costs(costs)
    n, m = costs.shape
    mapping, u, v = _assign_py.jv(costs)
    scale = max(1.0, float(np.abs(costs).max()))
    tol = TIE_TOL * scale
    reduced = costs - u[:, None] - v[None, :]
    if np.any((reduced <= tol).sum(axis=1) > 1):
        mapping = _lex_refine(costs, u, v, tol)
    total = float(costs[np.arange(n), mapping].sum())
    return Assignment(mapping=mapping, total_cost=total)
