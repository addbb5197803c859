"""Warm-startable exact transportation solver (wrapper around the numba kernel)."""

import math

import numpy as np
from scipy.spatial import cKDTree

from ..errors import SolverError
from . import _netsimplex as ns
from ._order import hilbert_keys

DEFAULT_CANDIDATES = 12
COARSE_MIN = 2048
MAX_SCAN_ROUNDS = 8
PENALTY0 = 1e-6
PENALTY_GROWTH = 16.0


def _pint(p):
    return int(p) if float(p).is_integer() and 1 <= p <= 16 else -1


class TransportSimplex:
    """Exact solver for one fixed set of supplies ``a`` and demands ``q``.

    Coordinates (or the dense cost matrix) may change between calls to
    :meth:`solve`; the previous optimal basis stays primal feasible and is
    reused, which is what makes Lloyd iterations cheap.
    """

    def __init__(self, a, q):
        a = np.ascontiguousarray(a, dtype=float)
        q = np.ascontiguousarray(q, dtype=float)
        if (a <= 0).any() or (q <= 0).any():
            raise ValueError("supplies and demands must be positive")
        self.a = a
        # exact balance is restored by rescaling the demands
        self.q = q * (math.fsum(a) / math.fsum(q))
        M, n = len(a), len(q)
        N = M + n + 1
        self.M, self.n = M, n
        self.parent = np.empty(N, np.int64)
        self.pflow = np.empty(N, np.float64)
        self.pot = np.empty(N, np.float64)
        self.depth = np.empty(N, np.int64)
        self.nchild = np.empty(N, np.int64)
        self.fcore = np.empty(N, np.int64)
        self.fleaf = np.empty(N, np.int64)
        self.nxt = np.empty(N, np.int64)
        self.prv = np.empty(N, np.int64)
        self._path = np.empty(N, np.int64)
        self._fl = np.empty(N, np.float64)
        self._stack = np.empty(N, np.int64)
        self.big = None
        self._last = None
        self.pivots = 0
        self._pos = 0

    def _run(self, X, Y, cand, p, pint, tol, max_pivots):
        width = cand.shape[1] if cand.shape[1] else self.n
        block = max(10, int(math.sqrt(self.M * width)))
        status, piv, self._pos = ns.run(
            X, Y, cand, float(p), pint, self.art, tol, block, max_pivots, self._pos,
            self.parent, self.pflow, self.pot, self.depth, self.nchild,
            self.fcore, self.fleaf, self.nxt, self.prv, self._path, self._fl, self._stack,
        )
        self.pivots += piv
        if status == 1:
            raise SolverError("pivot limit reached")
        if status < 0:
            raise SolverError("pivot failed: no blocking arc on the cycle")

    def _refresh(self, X, Y, p, pint):
        ns.refresh_potentials(X, Y, float(p), pint, self.art, self.parent, self.pot, self.depth,
                              self.nchild, self.fcore, self.nxt, self._stack)

    def _coarse_duals(self, X, Y, p, candidates):
        """Sink potentials of a coarsened problem (cells merged along a Hilbert curve)."""
        order = np.argsort(hilbert_keys(np.vstack([X, Y]))[:self.M], kind="stable")
        g = 1 << X.shape[1] if X.shape[1] <= 2 else 4
        groups = np.arange(self.M) // g
        ac = np.bincount(groups, weights=self.a[order])
        Xc = np.empty((len(ac), X.shape[1]))
        for i in range(X.shape[1]):
            Xc[:, i] = np.bincount(groups, weights=self.a[order] * X[order, i]) / ac
        coarse = TransportSimplex(ac, self.q)
        coarse.solve(Xc, Y, p, candidates=candidates)
        return coarse.potentials()[1]

    def _init_from_duals(self, X, Y, p, pint, v, cand):
        """Start from the assignment induced by sink potentials ``v``.

        Every cell goes to its best sink under ``cost - v``; cells that would
        overfill a sink start on their root arc instead. Root-arc costs are set
        so that the start basis has potentials ``v`` (up to a constant) and a
        root detour is only ``penalty`` dearer than the best real arc. That keeps
        the repair local; the penalty is raised later if it proves too small.
        """
        v = np.ascontiguousarray(v, dtype=float)
        assign = np.empty(self.M, np.int64)
        score = ns.dual_assign(X, Y, cand, float(p), pint, v, assign)
        order = np.lexsort((score, assign))
        sa = assign[order]
        csum = np.cumsum(self.a[order])
        first = np.searchsorted(sa, np.arange(self.n))
        base = np.concatenate([[0.0], csum])[first]
        drop = csum - base[sa] > self.q[sa]
        assign[order[drop]] = -1
        top = self.big
        shift = v - v.min()
        self.penalty = max(float(np.dot(self.a, score + v[assign])) / math.fsum(self.a), 1e-300) * PENALTY0
        self.art = np.empty(self.M + self.n)
        self.art[self.M:] = top + shift
        self.art[:self.M] = score + v.min() - top + self.penalty
        ns.init_assigned(self.a, self.q, assign, self.art, self.parent, self.pflow, self.pot,
                         self.depth, self.nchild, self.fcore, self.fleaf, self.nxt, self.prv)

    def _optimize(self, X, Y, p, pint, cand, tol, max_pivots):
        """Pivot to optimality; cheap candidate pricing first, exact checks last."""
        total = math.fsum(self.a)
        best_j = np.empty(self.M, np.int64)
        full = np.empty((self.M, 0), np.int64)
        rounds = 0
        if Y.shape[1]:
            order = np.argsort(Y[:, 0], kind="stable")
            keys = np.ascontiguousarray(Y[order, 0])
        else:
            order, keys = np.empty(0, np.int64), np.empty(0)
        while True:
            self._run(X, Y, cand, p, pint, tol, max_pivots)
            art = ns.extract(self.M, self.n, self.parent, self.pflow)[3]
            if art > 1e-12 * total and self.penalty is not None and self.penalty < 4 * self.big:
                # root detours are still competitive: make them dearer and continue
                self.penalty *= PENALTY_GROWTH
                under = (self.parent[:self.M] == self.M + self.n) & (self.pflow[:self.M] > 0)
                self.art[:self.M][under] += self.penalty
                self._refresh(X, Y, p, pint)
                continue
            if not cand.shape[1]:
                return
            self._refresh(X, Y, p, pint)
            if ns.scan_best(X, Y, float(p), pint, self.art, tol, self.parent, self.pot,
                            self.nchild, best_j, order, keys) == 0:
                return
            rounds += 1
            if rounds >= MAX_SCAN_ROUNDS:
                cand = full
            else:
                # arcs the candidate lists missed join them for the next round
                cand = np.ascontiguousarray(np.column_stack([cand, best_j]))

    def solve(self, X, Y, p, candidates=DEFAULT_CANDIDATES, cost_bound=None, duals=None):
        """Optimize the plan for sources at ``X`` and sinks at ``Y``.

        With ``Y is None``, ``X`` is a dense (M, n) cost matrix. ``candidates``
        nearest sinks per cell are priced first; every arc is checked before
        returning, so the result is exact regardless of that choice.
        ``duals`` (sink potentials) restarts from the assignment they induce
        instead of reusing the previous basis.
        Returns ``(cells, sinks, flows)`` of the basic arcs with positive flow.
        """
        if Y is None:
            X = np.ascontiguousarray(X, dtype=float)
            Y = np.empty((X.shape[1], 0))
            pint = -2
            cmax = float(X.max(initial=0.0))
        else:
            X = np.ascontiguousarray(X, dtype=float)
            Y = np.ascontiguousarray(Y, dtype=float)
            pint = _pint(p)
            if cost_bound is None:
                both = np.vstack([X, Y])
                diag = float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))
                cost_bound = diag**p
            cmax = cost_bound
        if X.shape[0] != self.M or Y.shape[0] != self.n:
            raise ValueError("problem size changed; build a new solver")
        scale = cmax if cmax > 0 else 1.0
        tol = 1e-11 * scale
        max_pivots = 200 * (self.M + self.n) + 10_000
        big = 4.0 * scale
        fresh = self._last is None
        if fresh:
            self.art = np.zeros(self.M + self.n)
            self.art[self.M:] = big
        elif big > self.big:
            self.art[self.M:] += big - self.big
        self.big = max(self.big or 0.0, big)
        self.penalty = None

        k = min(int(candidates), self.n) if candidates else self.n
        if pint != -2 and k < self.n:
            _, cand = cKDTree(Y).query(X, k=k)
            cand = np.ascontiguousarray(cand.reshape(self.M, k), dtype=np.int64)
        else:
            cand = np.empty((self.M, 0), np.int64)

        if pint == -2:
            if fresh:
                ns.init_tree(self.a, self.q, self.art, self.parent, self.pflow, self.pot, self.depth,
                             self.nchild, self.fcore, self.fleaf, self.nxt, self.prv)
        elif duals is not None:
            self._init_from_duals(X, Y, p, pint, duals, cand)
        elif fresh and self.M > max(COARSE_MIN, 4 * self.n):
            self._init_from_duals(X, Y, p, pint, self._coarse_duals(X, Y, p, candidates), cand)
        elif fresh:
            # northwest corner along a shared Hilbert curve is a near-local start
            keys = hilbert_keys(np.vstack([X, Y]))
            corder = np.argsort(keys[:self.M], kind="stable")
            sorder = np.argsort(keys[self.M:], kind="stable")
            ns.init_staircase(self.a, self.q, corder, sorder, self.art, self.parent, self.pflow,
                              self.pot, self.depth, self.nchild, self.fcore, self.fleaf,
                              self.nxt, self.prv)
        self._refresh(X, Y, p, pint)
        self._optimize(X, Y, p, pint, cand, tol, max_pivots)

        total = math.fsum(self.a)
        cells, sinks, flows, art = ns.extract(self.M, self.n, self.parent, self.pflow)
        if art > 1e-9 * total:
            raise SolverError(f"artificial flow {art!r} left at optimum")
        keep = flows > 1e-15 * self.a.max()
        self._last = (X, Y, p, pint)
        return cells[keep], sinks[keep], flows[keep]

    def potentials(self):
        """(cell potentials, sink potentials) of the current basis, u_c + v_j <= C_cj."""
        X, Y, p, pint = self._last
        self._refresh(X, Y, p, pint)
        M = self.M
        v = self.pot[M:M + self.n].copy()
        u = np.empty(M)
        for c in range(M):
            if self.nchild[c] == 0:
                par = self.parent[c]
                if par == M + self.n:
                    u[c] = -0.0
                elif pint == -2:
                    u[c] = X[c, par - M] - self.pot[par]
                else:
                    u[c] = ns._cost(X, Y, c, par - M, float(p), pint) - self.pot[par]
            else:
                u[c] = self.pot[c]
        return u, v


def solve_dense(a, q, cost):
    """Exact transportation optimum for a dense cost matrix; returns (value, plan matrix)."""
    a = np.asarray(a, float)
    q = np.asarray(q, float)
    cost = np.asarray(cost, float)
    keep_a = np.flatnonzero(a > 0)
    keep_q = np.flatnonzero(q > 0)
    plan = np.zeros_like(cost)
    if len(keep_a) == 0 or len(keep_q) == 0:
        return 0.0, plan
    solver = TransportSimplex(a[keep_a], q[keep_q])
    sub = cost[np.ix_(keep_a, keep_q)]
    cells, sinks, flows = solver.solve(sub, None, 1.0)
    plan[keep_a[cells], keep_q[sinks]] = flows
    return float(np.sum(flows * sub[cells, sinks])), plan
