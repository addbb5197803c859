"""Lloyd-type local optimizers for empirical (capacity) and classical quantization."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import EqqError, ValidationError
from ..measure import GridDensity, coarsen
from ..transport import SOLVER_LIMIT, CapacitySolver, PointCloud, nearest_assignment, w1d_exact
from ..transport.core import solve_uniform_capacity
from .centroid import group_p_centroids
from .constructions import chunk_1d, hex_2d, midpoint_1d, pierce_greedy

INITS = ("rho_sample", "grid_jitter", "user")
METHODS = ("midpoint_1d", "chunk_1d", "hex_2d", "pierce_greedy", "lloyd_capacity", "lloyd_classical")


@dataclass(frozen=True)
class OptimizerConfig:
    """Lloyd settings. ``coarse_cells_per_point`` enables coarse-grid restarts.

    With it set, restarts run on the coarsest dyadic coarsening of the grid
    that keeps at least that many cells per point, and only the best restart
    is refined level by level up to the full grid.
    """

    max_iters: int = 100
    tol: float = 1e-6
    restarts: int = 8
    seed: int = 0
    init: str = "rho_sample"
    init_points: tuple | None = None
    coarse_cells_per_point: int | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.init not in INITS:
            raise ValidationError(f"init must be one of {INITS}")
        if self.init == "user" and self.init_points is None:
            raise ValidationError("init='user' needs init_points")


@dataclass(frozen=True, eq=False)
class QuantizerResult:
    cloud: PointCloud
    cost: float
    method: str
    trace: tuple
    seed_used: int
    p: float
    restarts: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.cloud.n

    def to_json(self):
        out = {
            "method": self.method,
            "seed": self.seed_used,
            "trace": [float(t) for t in self.trace],
            "cost": float(self.cost),
            "n": self.n,
            "p": float(self.p),
            "restarts": self.restarts,
        }
        for key in ("method_costs", "failures"):
            if key in self.extra:
                out[key] = self.extra[key]
        return out


def _workers():
    try:
        return max(1, int(os.environ.get("EQQ_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    """Ordered map over restarts, threaded when EQQ_THREADS > 1."""
    items = list(items)
    workers = min(_workers(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def restart_rng(seed, restart):
    return np.random.default_rng([int(seed) & (2**64 - 1), int(restart)])


def initial_points(grid: GridDensity, n, cfg: OptimizerConfig, rng):
    d = grid.d
    if cfg.init == "user":
        pts = np.asarray(cfg.init_points, float).reshape(-1, d)
        if len(pts) != n:
            raise ValidationError(f"init_points has {len(pts)} points, expected {n}")
        return pts.copy()
    flat, centers, masses = grid.support()
    if cfg.init == "rho_sample":
        # i.i.d. draws from the piecewise-uniform grid distribution
        pick = rng.choice(len(flat), size=n, p=masses / masses.sum())
        return centers[pick] + (rng.random((n, d)) - 0.5) * grid.h
    lo = centers.min(axis=0) - grid.h / 2
    hi = centers.max(axis=0) + grid.h / 2
    m = max(1, math.ceil(n ** (1.0 / d) - 1e-9))
    while m**d < n:
        m += 1
    step = (hi - lo) / m
    sites = rng.choice(m**d, size=n, replace=False)
    idx = np.stack(np.unravel_index(sites, (m,) * d), axis=-1)
    return lo + step * (idx + rng.random((n, d)))


def _converged(prev, cost, tol):
    return cost == 0.0 or prev - cost < tol * max(prev, 1e-300)


# ---------------------------------------------------------------------------
# capacity-constrained Lloyd
# ---------------------------------------------------------------------------


def _capacity_run_1d(grid, n, p, cfg, pts):
    cloud = PointCloud(pts, grid.total)
    trace = [w1d_exact(grid, cloud, p)]
    for _ in range(cfg.max_iters - 1):
        # the optimal 1D plan is monotone: its centroid step yields the chunk p-centers
        nxt = chunk_1d(grid, n, p)
        cost = w1d_exact(grid, nxt, p)
        if cost > trace[-1]:
            break
        cloud = nxt
        done = _converged(trace[-1], cost, cfg.tol)
        trace.append(cost)
        if done:
            break
    return cloud, trace


def _capacity_run(grid, n, p, cfg, pts, limit):
    solver = CapacitySolver(grid, n, limit)
    x = solver.centers
    cost, plan = solver.solve(pts, p)
    trace = [cost]
    for _ in range(cfg.max_iters - 1):
        if trace[-1] == 0.0:
            break
        cells = np.searchsorted(solver.flat, plan.cells)
        new = group_p_centroids(plan.points, plan.masses, x[cells], p, pts)
        cost, nplan = solver.solve(new, p)
        if cost > trace[-1]:
            # numerical noise only; keep the better configuration
            break
        done = _converged(trace[-1], cost, cfg.tol)
        pts, plan = new, nplan
        trace.append(cost)
        if done:
            break
    return PointCloud(pts, grid.total), trace


def _coarse_levels(grid, n, cpp):
    """Dyadic coarsenings of ``grid`` (finest first) keeping >= cpp*n support cells."""
    levels = [grid]
    while all(s % 2 == 0 for s in levels[-1].shape):
        c = coarsen(levels[-1])
        if len(c.support()[0]) < cpp * n:
            break
        levels.append(c)
    return levels


def _coarse_grid(grid, n, cpp):
    return _coarse_levels(grid, n, cpp)[-1]


def lloyd_capacity(grid: GridDensity, n, p, cfg: OptimizerConfig = OptimizerConfig(),
                   limit=SOLVER_LIMIT) -> QuantizerResult:
    """Alternate exact capacity-constrained transport and p-centroid updates.

    Returns the best of ``cfg.restarts`` runs; its cost is an upper estimate of
    the optimal empirical quantization error.
    """
    if not grid.total > 0:
        raise ValidationError("grid has no mass")
    if n < 1:
        raise ValidationError("n must be >= 1")
    restarts = 1 if cfg.init == "user" else cfg.restarts
    extra = {}
    levels = [grid]
    if cfg.coarse_cells_per_point and grid.d > 1:
        levels = _coarse_levels(grid, n, cfg.coarse_cells_per_point)
    work = levels[-1]

    def one(r):
        pts = initial_points(work, n, cfg, restart_rng(cfg.seed, r))
        if work.d == 1:
            return _capacity_run_1d(work, n, p, cfg, pts)
        return _capacity_run(work, n, p, cfg, pts, limit)

    runs = _map(one, range(restarts))
    best = min(range(restarts), key=lambda r: (runs[r][1][-1], r))
    cloud, trace = runs[best]
    if work is not grid:
        extra["coarse_shape"] = list(work.shape)
        extra["coarse_cost"] = trace[-1]
        # refine through every intermediate level; each is a good start for the next
        for level in reversed(levels[:-1]):
            cloud, trace = _capacity_run(level, n, p, cfg, cloud.points.copy(), limit)
    extra["restart_costs"] = [run[1][-1] for run in runs]
    return QuantizerResult(cloud, trace[-1], "lloyd_capacity", tuple(trace), int(cfg.seed), float(p),
                           restarts, extra)


# ---------------------------------------------------------------------------
# classical Lloyd
# ---------------------------------------------------------------------------


def _classical_run(grid, n, p, cfg, pts):
    trace = []
    for _ in range(cfg.max_iters):
        _, x, m, lab, dist = nearest_assignment(grid, pts)
        for _ in range(n):
            loads = np.bincount(lab, weights=m, minlength=n)
            empty = np.flatnonzero(loads == 0)
            if not len(empty):
                break
            # respawn the first empty point at the costliest cell of the costliest point
            contrib = m * dist**p
            worst = int(np.argmax(np.bincount(lab, weights=contrib, minlength=n)))
            mine = np.flatnonzero(lab == worst)
            c = mine[int(np.argmax(contrib[mine]))]
            if contrib[c] <= 0:
                break
            pts = pts.copy()
            pts[empty[0]] = x[c]
            _, x, m, lab, dist = nearest_assignment(grid, pts)
        cost = float(np.dot(m, dist**p)) ** (1.0 / p)
        if trace and cost > trace[-1]:
            break
        done = cost == 0.0 or (bool(trace) and _converged(trace[-1], cost, cfg.tol))
        trace.append(cost)
        kept = pts
        if done:
            break
        pts = group_p_centroids(lab, m, x, p, pts)
    return PointCloud(kept, grid.total), trace


def lloyd_classical(grid: GridDensity, n, p, cfg: OptimizerConfig = OptimizerConfig(),
                    starts=()) -> QuantizerResult:
    """Lloyd's method with nearest-point cells (free weights): upper estimate of e_{p,n}.

    ``starts`` adds initial configurations run as extra restarts. Seeding with
    an empirical quantizer guarantees the e-estimate never exceeds its ẽ-cost.
    """
    if not grid.total > 0:
        raise ValidationError("grid has no mass")
    if n < 1:
        raise ValidationError("n must be >= 1")
    restarts = 1 if cfg.init == "user" else cfg.restarts

    starts = [np.asarray(s, float).reshape(n, grid.d) for s in starts]

    def one(r):
        pts = starts[r - restarts].copy() if r >= restarts else initial_points(grid, n, cfg, restart_rng(cfg.seed, r))
        return _classical_run(grid, n, p, cfg, pts)

    runs = _map(one, range(restarts + len(starts)))
    best = min(range(len(runs)), key=lambda r: (runs[r][1][-1], r))
    cloud, trace = runs[best]
    return QuantizerResult(cloud, trace[-1], "lloyd_classical", tuple(trace), int(cfg.seed), float(p),
                           restarts, {"restart_costs": [run[1][-1] for run in runs]})


# ---------------------------------------------------------------------------
# best of several methods
# ---------------------------------------------------------------------------


def empirical_cost(grid: GridDensity, cloud: PointCloud, p, limit=SOLVER_LIMIT):
    """ẽ-cost of a cloud: exact 1D formula in d=1, the transport solver otherwise."""
    if grid.d == 1:
        return w1d_exact(grid, cloud, p)
    return solve_uniform_capacity(grid, cloud, p, limit)[0]


def default_theta(p, d):
    if p < d:
        return max(8.0, p * d / (d - p) + 1.0)
    return 8.0


def _construction(grid, n, p, method, cfg, region, theta, limit):
    if method == "lloyd_capacity":
        return lloyd_capacity(grid, n, p, cfg, limit)
    if method == "lloyd_classical":
        cloud = lloyd_classical(grid, n, p, cfg).cloud
    elif method == "midpoint_1d":
        if grid.d != 1:
            raise ValidationError("midpoint_1d needs d = 1")
        cloud = midpoint_1d(n)
        cloud = PointCloud(grid.origin[0] + cloud.points * (grid.hi[0] - grid.origin[0]), grid.total)
    elif method == "chunk_1d":
        cloud = chunk_1d(grid, n, p)
    elif method == "hex_2d":
        cloud = hex_2d(grid, n, region, p).cloud
    elif method == "pierce_greedy":
        cloud = pierce_greedy(grid, n, default_theta(p, grid.d) if theta is None else theta, p).cloud
    else:
        raise ValidationError(f"unknown method {method!r}")
    cost = empirical_cost(grid, cloud, p, limit)
    return QuantizerResult(cloud, cost, method, (cost,), int(cfg.seed), float(p))


def best_quantizer(grid: GridDensity, n, p, methods, cfg: OptimizerConfig = OptimizerConfig(),
                   polish=False, region="square", theta=None, limit=SOLVER_LIMIT) -> QuantizerResult:
    """Run each method (optionally Lloyd-polished) and keep the cheapest result.

    Per-method costs land in ``extra["method_costs"]``; a method that fails is
    recorded in ``extra["failures"]`` and only the failure of all of them raises.
    """
    methods = sorted(set(methods))
    if not methods:
        raise ValidationError("methods must be nonempty")
    results, costs, failures, errors = [], {}, {}, []
    for method in methods:
        try:
            res = _construction(grid, n, p, method, cfg, region, theta, limit)
            if polish and method != "lloyd_capacity":
                warm = replace(cfg, init="user", init_points=tuple(map(tuple, res.cloud.points)),
                               coarse_cells_per_point=None)
                pol = lloyd_capacity(grid, n, p, warm, limit)
                if pol.cost <= res.cost:
                    res = replace(pol, method=method)
        except EqqError as exc:
            failures[method] = f"{exc.code}: {exc}"
            errors.append(exc)
            continue
        results.append(res)
        costs[method] = res.cost
    if not results:
        if len(errors) == 1:
            raise errors[0]
        raise EqqError("every method failed: " + "; ".join(f"{k}: {v}" for k, v in failures.items()))
    best = min(results, key=lambda r: r.cost)
    extra = dict(best.extra)
    extra["method_costs"] = costs
    if failures:
        extra["failures"] = failures
    return replace(best, extra=extra)

