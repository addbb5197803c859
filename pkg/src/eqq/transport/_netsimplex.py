"""Network simplex for transportation problems with many sources and few sinks.

Sources are grid cells (supplies ``a``), sinks are sites (demands ``q``), every
cell–site arc exists with cost ``‖x_c - y_j‖^p``. The arc costs are never
materialized: they are recomputed from coordinates whenever priced. A dense
cost matrix can be passed instead (``pint == -2``: ``X`` is the matrix).

Nodes are numbered cells ``0..M-1``, sinks ``M..M+n-1`` and an artificial root
``R = M+n``. Node ``v`` reaches ``R`` through an artificial arc of cost
``big[v]``. The cold-start basis routes every supply to ``R`` (cost 0) and every
demand from ``R`` (cost above every real arc cost), so artificial flow is never
optimal. Warm starts instead choose these costs to match given sink potentials. The spanning tree is kept strongly feasible (leaving-arc rule of
Cunningham, as in LEMON), which rules out cycling without perturbation.

A cell whose whole supply sits on its parent arc and that has no children is a
*leaf*. Leaves carry no explicit potential or depth: both follow from the
parent, so re-hanging a subtree only touches sinks and split cells (at most
``2n`` nodes) instead of every cell below them.
"""

import numpy as np
from numba import njit

_INF = np.inf


@njit(cache=True, inline="always")
def _cost(X, Y, c, j, p, pint):
    if pint == -2:
        # dense mode: X holds the cost matrix
        return X[c, j]
    s = 0.0
    for k in range(X.shape[1]):
        t = X[c, k] - Y[j, k]
        s += t * t
    if pint == 2:
        return s
    r = np.sqrt(s)
    if pint == 1:
        return r
    if r == 0.0:
        return 0.0
    if pint > 0:
        out = r
        for _ in range(pint - 1):
            out *= r
        return out
    return np.exp(p * np.log(r))


@njit(cache=True, inline="always")
def _arc_cost(v, parent, X, Y, p, pint, M, R, big):
    par = parent[v]
    if par == R:
        return big[v]
    if v < M:
        return _cost(X, Y, v, par - M, p, pint)
    return _cost(X, Y, par, v - M, p, pint)


@njit(cache=True, inline="always")
def _getpot(v, parent, pot, nchild, X, Y, p, pint, M, R, big):
    if v < M and nchild[v] == 0:
        return _arc_cost(v, parent, X, Y, p, pint, M, R, big) - pot[parent[v]]
    return pot[v]


@njit(cache=True, inline="always")
def _getdepth(v, parent, depth, nchild, M):
    if v < M and nchild[v] == 0:
        return depth[parent[v]] + 1
    return depth[v]


@njit(cache=True, inline="always")
def _raw_remove(v, parent, fcore, fleaf, nxt, prv):
    par = parent[v]
    pv = prv[v]
    nv = nxt[v]
    if pv >= 0:
        nxt[pv] = nv
    elif fcore[par] == v:
        fcore[par] = nv
    else:
        fleaf[par] = nv
    if nv >= 0:
        prv[nv] = pv
    nxt[v] = -1
    prv[v] = -1


@njit(cache=True, inline="always")
def _push(v, par, head, nxt, prv):
    h = head[par]
    nxt[v] = h
    prv[v] = -1
    if h >= 0:
        prv[h] = v
    head[par] = v


@njit(cache=True)
def init_tree(a, q, big, parent, pflow, pot, depth, nchild, fcore, fleaf, nxt, prv):
    """Artificial starting basis: all supplies into the root, all demands out of it."""
    M = a.shape[0]
    n = q.shape[0]
    R = M + n
    fcore[:] = -1
    fleaf[:] = -1
    nxt[:] = -1
    prv[:] = -1
    nchild[:] = 0
    parent[R] = -1
    pflow[R] = 0.0
    pot[R] = 0.0
    depth[R] = 0
    for j in range(n - 1, -1, -1):
        v = M + j
        parent[v] = R
        pflow[v] = q[j]
        pot[v] = big[v]
        depth[v] = 1
        _push(v, R, fcore, nxt, prv)
    for c in range(M - 1, -1, -1):
        parent[c] = R
        pflow[c] = a[c]
        pot[c] = big[c]
        depth[c] = 1
        _push(c, R, fleaf, nxt, prv)


@njit(cache=True)
def refresh_potentials(X, Y, p, pint, big, parent, pot, depth, nchild, fcore, nxt, stack):
    """Recompute explicit potentials and depths of core nodes from the root down."""
    M = X.shape[0]
    n = Y.shape[0]
    R = M + n
    pot[R] = 0.0
    depth[R] = 0
    top = 0
    ch = fcore[R]
    while ch >= 0:
        stack[top] = ch
        top += 1
        ch = nxt[ch]
    while top > 0:
        top -= 1
        v = stack[top]
        pot[v] = _arc_cost(v, parent, X, Y, p, pint, M, R, big) - pot[parent[v]]
        depth[v] = depth[parent[v]] + 1
        ch = fcore[v]
        while ch >= 0:
            stack[top] = ch
            top += 1
            ch = nxt[ch]


@njit(cache=True)
def _pivot(c, jn, rc, X, Y, p, pint, big, parent, pflow, pot, depth, nchild, fcore, fleaf, nxt, prv,
           path, fl, stack):
    M = X.shape[0]
    n = Y.shape[0]
    R = M + n

    # join node
    u = c
    w = jn
    du = _getdepth(u, parent, depth, nchild, M)
    dw = _getdepth(w, parent, depth, nchild, M)
    while du > dw:
        u = parent[u]
        du -= 1
    while dw > du:
        w = parent[w]
        dw -= 1
    while u != w:
        u = parent[u]
        w = parent[w]
    join = u

    # leaving arc; strict on the first side, non-strict on the second
    delta = _INF
    u_out = -1
    side = 0
    u = c
    while u != join:
        if u < M:
            f = pflow[u]
            if f < delta:
                delta = f
                u_out = u
                side = 1
        u = parent[u]
    u = jn
    while u != join:
        if u >= M:
            f = pflow[u]
            if f <= delta:
                delta = f
                u_out = u
                side = 2
        u = parent[u]
    if u_out < 0:
        return -1

    if delta > 0.0:
        u = c
        while u != join:
            if u < M:
                pflow[u] -= delta
            else:
                pflow[u] += delta
            u = parent[u]
        u = jn
        while u != join:
            if u >= M:
                pflow[u] -= delta
            else:
                pflow[u] += delta
            u = parent[u]

    if side == 1:
        a_node = c
        b_node = jn
    else:
        a_node = jn
        b_node = c

    # a leaf cell moving wholesale to the entering sink
    if side == 1 and u_out == c and nchild[c] == 0:
        _raw_remove(c, parent, fcore, fleaf, nxt, prv)
        parent[c] = jn
        pflow[c] = delta
        _push(c, jn, fleaf, nxt, prv)
        return 0

    if b_node < M and nchild[b_node] == 0:
        pot[b_node] = _getpot(b_node, parent, pot, nchild, X, Y, p, pint, M, R, big)
        depth[b_node] = _getdepth(b_node, parent, depth, nchild, M)
        _raw_remove(b_node, parent, fcore, fleaf, nxt, prv)
        _push(b_node, parent[b_node], fcore, nxt, prv)
    if a_node < M and nchild[a_node] == 0:
        pot[a_node] = _getpot(a_node, parent, pot, nchild, X, Y, p, pint, M, R, big)
        depth[a_node] = _getdepth(a_node, parent, depth, nchild, M)

    k = 0
    path[0] = a_node
    v = a_node
    while v != u_out:
        v = parent[v]
        k += 1
        path[k] = v
    old_par = parent[u_out]
    for i in range(k):
        fl[i] = pflow[path[i]]
    for i in range(k + 1):
        v = path[i]
        par = parent[v]
        _raw_remove(v, parent, fcore, fleaf, nxt, prv)
        if par < M:
            nchild[par] -= 1
    for i in range(k):
        child = path[i + 1]
        newpar = path[i]
        parent[child] = newpar
        pflow[child] = fl[i]
        if newpar < M:
            nchild[newpar] += 1
    parent[a_node] = b_node
    pflow[a_node] = delta
    if b_node < M:
        nchild[b_node] += 1
    if old_par < M and nchild[old_par] == 0:
        _raw_remove(old_par, parent, fcore, fleaf, nxt, prv)
        _push(old_par, parent[old_par], fleaf, nxt, prv)
    for i in range(k + 1):
        v = path[i]
        if v < M and nchild[v] == 0:
            _push(v, parent[v], fleaf, nxt, prv)
        else:
            _push(v, parent[v], fcore, nxt, prv)

    if side == 1:
        sc = rc
    else:
        sc = -rc
    stack[0] = a_node
    top = 1
    while top > 0:
        top -= 1
        v = stack[top]
        if v < M:
            pot[v] += sc
        else:
            pot[v] -= sc
        depth[v] = depth[parent[v]] + 1
        ch = fcore[v]
        while ch >= 0:
            stack[top] = ch
            top += 1
            ch = nxt[ch]
    return 0


@njit(cache=True)
def run(X, Y, cand, p, pint, big, tol, block, max_pivots, start,
        parent, pflow, pot, depth, nchild, fcore, fleaf, nxt, prv, path, fl, stack):
    """Pivot until no priced arc has reduced cost below ``-tol``.

    Arcs are priced from ``cand`` (cell -> candidate sink indices, -1 padded);
    an empty ``cand`` (zero columns) prices every sink. Block pricing in a
    fixed cyclic order keeps the result deterministic.
    Returns (status, pivots, next start); status 0 optimal, 1 pivot limit,
    -1 internal error.
    """
    M = X.shape[0]
    n = Y.shape[0]
    R = M + n
    full = cand.shape[1] == 0
    width = n if full else cand.shape[1]
    pos = start
    pivots = 0
    while True:
        best = -tol
        bc = -1
        bj = -1
        cnt = 0
        for _ in range(M):
            cc = pos
            pos += 1
            if pos == M:
                pos = 0
            uc = _getpot(cc, parent, pot, nchild, X, Y, p, pint, M, R, big)
            for t in range(width):
                if full:
                    j = t
                else:
                    j = cand[cc, t]
                    if j < 0:
                        continue
                r = _cost(X, Y, cc, j, p, pint) - uc - pot[M + j]
                if r < best:
                    best = r
                    bc = cc
                    bj = M + j
            cnt += width
            if cnt >= block and bc >= 0:
                break
        if bc < 0:
            return 0, pivots, pos
        if _pivot(bc, bj, best, X, Y, p, pint, big, parent, pflow, pot, depth, nchild,
                  fcore, fleaf, nxt, prv, path, fl, stack) < 0:
            return -1, pivots, pos
        pivots += 1
        if pivots >= max_pivots:
            return 1, pivots, pos


@njit(cache=True)
def extract(M, n, parent, pflow):
    """Basic arcs as (cell, sink, flow) plus the total flow left on artificial arcs."""
    R = M + n
    cells = np.empty(M + n, np.int64)
    sinks = np.empty(M + n, np.int64)
    flows = np.empty(M + n, np.float64)
    k = 0
    art = 0.0
    for c in range(M):
        par = parent[c]
        if par == R:
            art += pflow[c]
        else:
            cells[k] = c
            sinks[k] = par - M
            flows[k] = pflow[c]
            k += 1
    for j in range(n):
        v = M + j
        par = parent[v]
        if par == R:
            art += pflow[v]
        else:
            cells[k] = par
            sinks[k] = j
            flows[k] = pflow[v]
            k += 1
    return cells[:k], sinks[:k], flows[:k], art


@njit(cache=True)
def plan_cost(X, Y, cells, sinks, flows, p, pint):
    s = 0.0
    for k in range(cells.shape[0]):
        if flows[k] > 0.0:
            s += flows[k] * _cost(X, Y, cells[k], sinks[k], p, pint)
    return s


@njit(cache=True)
def init_staircase(a, q, corder, sorder, big, parent, pflow, pot, depth, nchild, fcore, fleaf, nxt, prv):
    """Northwest-corner basis along the given cell and sink orders.

    The resulting tree is a staircase hung below the root through a zero-flow
    artificial arc ``R -> first sink``. When a cell exactly exhausts a sink,
    the zero-flow arc goes from that cell to the next sink, i.e. away from the
    root, so the basis is strongly feasible.
    """
    M = a.shape[0]
    n = q.shape[0]
    R = M + n
    fcore[:] = -1
    fleaf[:] = -1
    nxt[:] = -1
    prv[:] = -1
    nchild[:] = 0
    parent[R] = -1
    pflow[R] = 0.0
    pot[R] = 0.0
    depth[R] = 0
    s0 = M + sorder[0]
    parent[s0] = R
    pflow[s0] = 0.0
    ci = 0
    sj = 0
    c = corder[0]
    s = M + sorder[0]
    ra = a[c]
    rq = q[sorder[0]]
    parent[c] = s
    pflow[c] = 0.0
    while True:
        x = min(ra, rq)
        if x < 0.0:
            x = 0.0
        # arc (c, s) is the tree arc of whichever endpoint joined last
        if parent[c] == s:
            pflow[c] += x
        else:
            pflow[s] += x
        ra -= x
        rq -= x
        if rq <= 0.0 and sj < n - 1:
            sj += 1
            s = M + sorder[sj]
            rq = q[sorder[sj]]
            parent[s] = c
            pflow[s] = 0.0
            nchild[c] += 1
        elif ci < M - 1:
            ci += 1
            c = corder[ci]
            ra = a[c]
            parent[c] = s
            pflow[c] = 0.0
        else:
            break
    # rounding can leave trailing sinks unreached; hang them on the last cell
    while sj < n - 1:
        sj += 1
        s = M + sorder[sj]
        parent[s] = c
        pflow[s] = 0.0
        nchild[c] += 1
    for v in range(M + n):
        par = parent[v]
        if v < M and nchild[v] == 0:
            _push(v, par, fleaf, nxt, prv)
        else:
            _push(v, par, fcore, nxt, prv)


@njit(cache=True)
def init_assigned(a, q, assign, big, parent, pflow, pot, depth, nchild, fcore, fleaf, nxt, prv):
    """Basis where each cell with ``assign[c] >= 0`` hangs under that sink.

    Cells with ``assign[c] < 0`` ship their supply to the root; each sink gets
    its remaining deficit from the root. Kept cells must not overfill a sink.
    All zero-flow arcs are root -> sink, so the tree is strongly feasible.
    """
    M = a.shape[0]
    n = q.shape[0]
    R = M + n
    fcore[:] = -1
    fleaf[:] = -1
    nxt[:] = -1
    prv[:] = -1
    nchild[:] = 0
    parent[R] = -1
    pflow[R] = 0.0
    pot[R] = 0.0
    depth[R] = 0
    inflow = np.zeros(n)
    for c in range(M - 1, -1, -1):
        j = assign[c]
        if j >= 0:
            parent[c] = M + j
            inflow[j] += a[c]
            _push(c, M + j, fleaf, nxt, prv)
        else:
            parent[c] = R
            _push(c, R, fleaf, nxt, prv)
        pflow[c] = a[c]
    for j in range(n - 1, -1, -1):
        v = M + j
        parent[v] = R
        pflow[v] = max(q[j] - inflow[j], 0.0)
        pot[v] = big[v]
        depth[v] = 1
        _push(v, R, fcore, nxt, prv)


@njit(cache=True)
def scan_best(X, Y, p, pint, big, tol, parent, pot, nchild, best_j, order, keys):
    """Most negative reduced-cost sink of every cell over all sinks.

    ``best_j[c]`` is set to that sink when its reduced cost is below ``-tol``
    and to -1 otherwise (ties go to the lowest index). Returns the number of
    violating cells. With coordinates, ``order`` sorts the sinks by their first
    coordinate (``keys``); a sink can only violate when its cost is below
    ``u_c + max v``, so only the slab of sinks that close in that coordinate
    is priced.
    """
    M = X.shape[0]
    n = Y.shape[0]
    R = M + n
    vmax = -_INF
    for j in range(n):
        vmax = max(vmax, pot[M + j])
    count = 0
    for c in range(M):
        uc = _getpot(c, parent, pot, nchild, X, Y, p, pint, M, R, big)
        best = -tol
        bj = -1
        if pint == -2:
            lo = 0
            hi = n
        else:
            thr = uc + vmax - tol
            if thr <= 0.0:
                best_j[c] = -1
                continue
            rad = np.exp(np.log(thr) / p) * (1.0 + 1e-9) + 1e-300
            lo = np.searchsorted(keys, X[c, 0] - rad, side="left")
            hi = np.searchsorted(keys, X[c, 0] + rad, side="right")
        for t in range(lo, hi):
            j = t if pint == -2 else order[t]
            r = _cost(X, Y, c, j, p, pint) - uc - pot[M + j]
            if r < best or (r == best and bj >= 0 and j < bj):
                best = r
                bj = j
        best_j[c] = bj
        if bj >= 0:
            count += 1
    return count


@njit(cache=True)
def dual_assign(X, Y, cand, p, pint, v, out):
    """Index of the sink minimizing ``cost - v`` per cell, over ``cand`` or all sinks."""
    M = X.shape[0]
    n = Y.shape[0]
    full = cand.shape[1] == 0
    width = n if full else cand.shape[1]
    score = np.empty(M)
    for c in range(M):
        best = np.inf
        bj = -1
        for t in range(width):
            j = t if full else cand[c, t]
            if j < 0:
                break
            r = _cost(X, Y, c, j, p, pint) - v[j]
            if r < best:
                best = r
                bj = j
        out[c] = bj
        score[c] = best
    return score
