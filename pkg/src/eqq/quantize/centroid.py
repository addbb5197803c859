"""p-centroids: minimizers of Σ m_j ‖c - y_j‖^p."""

import numpy as np
from numba import njit

STEP_TOL = 1e-10
GRAD_TOL = 1e-10
MAX_ITERS = 10_000


@njit(cache=True, nogil=True)
def _weiszfeld(Y, w, x0, tol, max_iters):
    """Weighted geometric median, started at ``x0`` (cost never increases).

    Iterates that land on a data point use the Vardi-Zhang modification, so
    data points that are themselves optimal are recognized.
    """
    m, d = Y.shape
    x = x0.copy()
    num = np.empty(d)
    for _ in range(max_iters):
        num[:] = 0.0
        den = 0.0
        at = 0.0
        for k in range(m):
            r = 0.0
            for i in range(d):
                t = Y[k, i] - x[i]
                r += t * t
            r = np.sqrt(r)
            if r <= 1e-300:
                at += w[k]
                continue
            for i in range(d):
                num[i] += w[k] * Y[k, i] / r
            den += w[k] / r
        if den == 0.0:
            return x
        step = 0.0
        if at > 0.0:
            # residual force of the other points at the data point x
            g = 0.0
            for i in range(d):
                t = num[i] - den * x[i]
                g += t * t
            g = np.sqrt(g)
            if g <= at:
                return x
            lam = min(1.0, at / g)
            for i in range(d):
                nx = (1.0 - lam) * num[i] / den + lam * x[i]
                step += (nx - x[i]) ** 2
                x[i] = nx
        else:
            for i in range(d):
                nx = num[i] / den
                step += (nx - x[i]) ** 2
                x[i] = nx
        if np.sqrt(step) <= tol:
            return x
    return x


def _objective(Y, w, x, p):
    r = np.sqrt(((Y - x) ** 2).sum(axis=1))
    return float(np.dot(w, r**p))


def _gradient(Y, w, x, p):
    diff = x - Y
    r = np.sqrt((diff**2).sum(axis=1))
    coef = np.zeros_like(r)
    pos = r > 0
    coef[pos] = p * w[pos] * r[pos] ** (p - 2)
    return coef @ diff


def _descent(Y, w, x0, p, tol=GRAD_TOL, max_iters=MAX_ITERS):
    """Damped gradient descent with backtracking (any p > 1), started at ``x0``."""
    x = np.array(x0, float)
    fx = _objective(Y, w, x, p)
    scale = max(float(w.sum()), 1e-300)
    step = 1.0 / (p * scale)
    for _ in range(max_iters):
        g = _gradient(Y, w, x, p)
        gn = float(np.linalg.norm(g))
        if gn <= tol * scale:
            break
        while True:
            trial = x - step * g
            ft = _objective(Y, w, trial, p)
            if ft <= fx - 0.5 * step * gn * gn:
                break
            step *= 0.5
            if step * gn < 1e-16:
                return x
        x, fx = trial, ft
        step *= 2.0
    return x


def weighted_p_centroid(masses, points, p, start=None):
    """Minimizer of Σ masses[j]·‖c - points[j]‖^p.

    p=2 gives the weighted mean exactly; p=1 runs Weiszfeld (step tolerance
    1e-10); other p use damped gradient descent (gradient tolerance 1e-10,
    relative to the total mass). Iterative methods start from ``start`` when
    given, and then never return a worse point than ``start``.
    """
    w = np.asarray(masses, float)
    Y = np.asarray(points, float)
    if Y.ndim == 1:
        Y = Y[:, None]
    keep = w > 0
    if not keep.any():
        raise ValueError("p_centroid needs a positive mass")
    w, Y = w[keep], Y[keep]
    mean = (w @ Y) / w.sum()
    if p == 2 or len(w) == 1:
        return mean if len(w) > 1 else Y[0].copy()
    x0 = mean if start is None else np.asarray(start, float)
    if p == 1:
        return _weiszfeld(np.ascontiguousarray(Y), w, x0.astype(float), STEP_TOL, MAX_ITERS)
    return _descent(Y, w, x0, p)


def p_centroid(weighted_points, p):
    """p-centroid of a list of ``(mass, vector)`` pairs."""
    masses = np.array([float(m) for m, _ in weighted_points])
    points = np.array([np.atleast_1d(np.asarray(v, float)) for _, v in weighted_points])
    return weighted_p_centroid(masses, points, p)


@njit(cache=True, nogil=True)
def _weiszfeld_groups(X, ptr, w, starts, tol, max_iters, out):
    for g in range(ptr.shape[0] - 1):
        a, b = ptr[g], ptr[g + 1]
        if b > a:
            out[g] = _weiszfeld(X[a:b], w[a:b], starts[g], tol, max_iters)
        else:
            out[g] = starts[g]


def group_p_centroids(labels, masses, points, p, starts):
    """p-centroid of the mass assigned to each label ``0..len(starts)-1``.

    Labels without mass keep their start position. For p != 2 each group is
    optimized from its start, so no group gets worse.
    """
    starts = np.asarray(starts, float)
    n, d = starts.shape
    labels = np.asarray(labels, np.int64)
    masses = np.asarray(masses, float)
    points = np.asarray(points, float)
    out = starts.copy()
    if p == 2:
        W = np.bincount(labels, weights=masses, minlength=n)
        has = W > 0
        for i in range(d):
            s = np.bincount(labels, weights=masses * points[:, i], minlength=n)
            out[has, i] = s[has] / W[has]
        return out
    order = np.argsort(labels, kind="stable")
    ptr = np.searchsorted(labels[order], np.arange(n + 1))
    if p == 1:
        _weiszfeld_groups(np.ascontiguousarray(points[order]), ptr.astype(np.int64),
                          np.ascontiguousarray(masses[order]), np.ascontiguousarray(starts),
                          STEP_TOL, MAX_ITERS, out)
        return out
    for g in range(n):
        a, b = ptr[g], ptr[g + 1]
        if b > a:
            out[g] = weighted_p_centroid(masses[order[a:b]], points[order[a:b]], p, start=starts[g])
    return out
