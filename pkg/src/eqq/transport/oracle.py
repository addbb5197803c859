"""Exhaustive reference solver for tiny transportation problems.

Shares no code with the simplex: every vertex of the transportation
polytope is produced by some sequence of steps "pick a cell and a point that
both still have mass, ship as much as possible between them", so minimizing
over all such sequences (with memoization on the remaining masses) gives the
exact optimum. Masses are tracked as exact fractions.
"""

import math
from fractions import Fraction
from functools import lru_cache

from ..errors import TooLarge

MAX_CELLS = 8
MAX_POINTS = 4


def transport_optimum(supply, demand, cost):
    """Minimal Σ x_ij cost_ij over plans with the given (balanced) marginals."""
    s0 = tuple(Fraction(v) for v in supply)
    d0 = list(Fraction(v) for v in demand)
    # absorb float rounding of the totals into the last demand
    d0[-1] += sum(s0) - sum(d0)
    d0 = tuple(d0)

    @lru_cache(maxsize=None)
    def best(s, d):
        rows = [i for i, v in enumerate(s) if v > 0]
        cols = [j for j, v in enumerate(d) if v > 0]
        if not rows or not cols:
            return 0.0
        out = math.inf
        for i in rows:
            for j in cols:
                x = min(s[i], d[j])
                s2 = s[:i] + (s[i] - x,) + s[i + 1:]
                d2 = d[:j] + (d[j] - x,) + d[j + 1:]
                out = min(out, float(x) * cost[i][j] + best(s2, d2))
        return out

    return best(s0, d0)


def brute_force_oracle(grid, cloud, p):
    """Exact capacity-constrained W_p for at most 8 nonzero cells and 4 points."""
    _, centers, masses = grid.support()
    if len(masses) > MAX_CELLS or cloud.n > MAX_POINTS:
        raise TooLarge(f"oracle handles at most {MAX_CELLS} cells and {MAX_POINTS} points")
    cost = [[math.dist(c, y) ** p for y in cloud.points.tolist()] for c in centers.tolist()]
    value = transport_optimum(masses.tolist(), [cloud.weight_each] * cloud.n, cost)
    return value ** (1.0 / p)
