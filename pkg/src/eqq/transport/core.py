"""Transport costs between grid densities and uniform-weight point clouds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DimensionMismatch, SolverLimitExceeded, ValidationError
from ..fileio import atomic_write_text, fmt, read_json, write_json
from ..measure import GridDensity
from .simplex import TransportSimplex, solve_dense

SOLVER_LIMIT = 100_000
TOTAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PointCloud:
    """n sites in R^d, each carrying mass ``total / n``."""

    points: np.ndarray
    total: float = 1.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValidationError("a point cloud needs at least one point")
        if not np.isfinite(pts).all():
            raise ValidationError("points must be finite")
        if not self.total > 0:
            raise ValidationError("total mass must be positive")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "total", float(self.total))

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def weight_each(self):
        return self.total / self.n

    def to_json(self):
        return {"d": self.d, "n": self.n, "total": self.total,
                "points": [[float(v) for v in row] for row in self.points]}

    @classmethod
    def from_json(cls, obj):
        pts = np.asarray(obj["points"], float).reshape(int(obj["n"]), int(obj["d"]))
        return cls(pts, float(obj.get("total", 1.0)))


def cloud_csv(cloud: PointCloud) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{i + 1}" for i in range(cloud.d)])
    for row in cloud.points:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_cloud(path, cloud: PointCloud):
    """CSV (``.csv``) or JSON (anything else)."""
    path = str(path)
    if path.endswith(".csv"):
        atomic_write_text(path, cloud_csv(cloud))
    else:
        write_json(path, cloud.to_json())


def read_cloud(path, total=1.0) -> PointCloud:
    path = str(path)
    if not path.endswith(".csv"):
        return PointCloud.from_json(read_json(path))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty point file")
    body = rows[1:] if rows[0] and rows[0][0].startswith("x_") else rows
    return PointCloud(np.array([[float(v) for v in r] for r in body if r]), total)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse plan: ``masses[k]`` moves from cell ``cells[k]`` to point ``points[k]``."""

    cells: np.ndarray
    points: np.ndarray
    masses: np.ndarray
    cost_p: float
    p: float

    def __post_init__(self):
        for name in ("cells", "points", "masses"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def entries(self):
        return list(zip(self.cells.tolist(), self.points.tolist(), self.masses.tolist()))

    @property
    def cost(self):
        return self.cost_p ** (1.0 / self.p)

    def cell_sums(self, ncells):
        return np.bincount(self.cells, weights=self.masses, minlength=ncells)

    def point_sums(self, n):
        return np.bincount(self.points, weights=self.masses, minlength=n)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_index", "point_index", "mass"])
        for c, i, m in zip(self.cells, self.points, self.masses):
            w.writerow([int(c), int(i), fmt(m)])
        return buf.getvalue()


def cost_record(cost, p):
    """JSON form of a reported cost."""
    return {"p": float(p), "cost": float(cost), "cost_pow_p": float(cost) ** float(p)}


def pair_costs(x, y, p):
    """‖x_k - y_k‖^p row by row."""
    diff = np.asarray(x, float) - np.asarray(y, float)
    sq = np.einsum("ij,ij->i", diff, diff)
    if p == 2:
        return sq
    return np.sqrt(sq) ** p


def _check_p(p):
    if not (np.isfinite(p) and p >= 1):
        raise ValidationError("p must be a finite number >= 1")


def _check_dims(grid, cloud):
    if grid.d != cloud.d:
        raise DimensionMismatch(f"grid has d={grid.d}, cloud has d={cloud.d}")


def _check_totals(grid, cloud):
    if abs(grid.total - cloud.n * cloud.weight_each) > TOTAL_TOL * max(1.0, grid.total):
        raise ValidationError(
            f"grid total {grid.total!r} differs from cloud total {cloud.n * cloud.weight_each!r}")


class CapacitySolver:
    """Capacity-constrained transport from one grid to n equal-mass points.

    Keeps the simplex basis between calls, so re-solving after the points
    moved a little (a Lloyd step) costs far less than a cold solve.
    """

    def __init__(self, grid: GridDensity, n: int, limit=SOLVER_LIMIT):
        flat, centers, masses = grid.support()
        if len(flat) > limit:
            raise SolverLimitExceeded(f"{len(flat)} nonzero cells exceed the solver limit {limit}")
        self.grid = grid
        self.n = int(n)
        self.flat = flat
        self.centers = np.ascontiguousarray(centers)
        self.masses = masses
        self._simplex = TransportSimplex(masses, np.full(self.n, grid.total / self.n))

    def solve(self, points, p, duals=None):
        """Return ``(cost, plan)`` for the given point locations."""
        points = np.ascontiguousarray(points, dtype=float)
        if points.shape != (self.n, self.grid.d):
            raise ValidationError("point array has the wrong shape")
        if self.n == 1:
            cells = np.arange(len(self.flat))
            sinks = np.zeros(len(self.flat), dtype=np.int64)
            flows = self.masses.copy()
        else:
            cells, sinks, flows = self._simplex.solve(self.centers, points, p, duals=duals)
            order = np.lexsort((sinks, cells))
            cells, sinks, flows = cells[order], sinks[order], flows[order]
        cost_p = float(np.dot(flows, pair_costs(self.centers[cells], points[sinks], p)))
        plan = TransportPlan(self.flat[cells], sinks, flows, cost_p, float(p))
        return cost_p ** (1.0 / p), plan

    def sink_potentials(self):
        return self._simplex.potentials()[1]


def solve_uniform_capacity(grid: GridDensity, cloud: PointCloud, p, limit=SOLVER_LIMIT):
    """W_p between the grid (cells as atoms at their centers) and the cloud.

    Every point must receive exactly ``total / n``. Returns ``(cost, plan)``
    with ``cost = (Σ mass·‖center - point‖^p)^{1/p}`` and an optimal basic plan.
    """
    _check_p(p)
    _check_dims(grid, cloud)
    _check_totals(grid, cloud)
    return CapacitySolver(grid, cloud.n, limit).solve(cloud.points, p)


def nearest_assignment(grid: GridDensity, points):
    """(flat cells, centers, masses, nearest point index, distance) over the support."""
    flat, centers, masses = grid.support()
    dist, idx = cKDTree(points).query(centers, k=1)
    return flat, centers, masses, np.asarray(idx, dtype=np.int64), dist


def nearest_assignment_cost(grid: GridDensity, cloud: PointCloud, p):
    """(Σ_c m_c min_i ‖center(c) - x_i‖^p)^{1/p}: free weights, no capacities."""
    _check_p(p)
    _check_dims(grid, cloud)
    _, _, masses, _, dist = nearest_assignment(grid, cloud.points)
    return float(np.dot(masses, dist**p)) ** (1.0 / p)


def _antiderivative(t, p):
    # d/dt of sign(t)|t|^{p+1}/(p+1) is |t|^p
    return np.sign(t) * np.abs(t) ** (p + 1) / (p + 1)


def w1d_exact(grid: GridDensity, cloud: PointCloud, p, exact_cells=True):
    """Exact 1D cost by the monotone (quantile) coupling, no LP.

    With ``exact_cells`` the density is taken constant inside each cell and
    integrated in closed form; otherwise each cell is an atom at its center,
    which is the discretization :func:`solve_uniform_capacity` works with.
    """
    _check_p(p)
    if grid.d != 1 or cloud.d != 1:
        raise DimensionMismatch("w1d_exact needs d = 1")
    _check_totals(grid, cloud)
    m = grid.masses.ravel()
    keep = np.flatnonzero(m > 0)
    m = m[keep]
    left = grid.origin[0] + grid.h * keep
    y = np.sort(cloud.points[:, 0])
    n = len(y)
    cm = np.concatenate([[0.0], np.cumsum(m)])
    # rescale so that both cumulative scales end at the same total
    cm *= cloud.total / cm[-1]
    cq = cloud.weight_each * np.arange(n + 1)
    cq[-1] = cm[-1]
    cuts = np.union1d(cm, cq)
    lo, hi = cuts[:-1], cuts[1:]
    mid = 0.5 * (lo + hi)
    seg = hi > lo
    lo, hi, mid = lo[seg], hi[seg], mid[seg]
    k = np.clip(np.searchsorted(cm, mid, side="right") - 1, 0, len(m) - 1)
    i = np.clip(np.searchsorted(cq, mid, side="right") - 1, 0, n - 1)
    if exact_cells:
        rho = (cm[k + 1] - cm[k]) / grid.h
        x0 = left[k] + (lo - cm[k]) / rho
        x1 = left[k] + (hi - cm[k]) / rho
        parts = rho * (_antiderivative(x1 - y[i], p) - _antiderivative(x0 - y[i], p))
    else:
        centers = left[k] + 0.5 * grid.h
        parts = (hi - lo) * np.abs(centers - y[i]) ** p
    return math.fsum(parts) ** (1.0 / p)


def _boundary_distance(x, lo, hi):
    return np.minimum(x - lo, hi - x).min(axis=1)


def _inside(x, lo, hi):
    return np.all((x > lo) & (x < hi), axis=1)


def wb_boundary(grid: GridDensity, cloud: PointCloud, omega, p):
    """Boundary Wasserstein pseudodistance Wb_{Ω,p} for an axis-aligned box Ω.

    Only cells (by center) and points strictly inside Ω take part. A reservoir
    node stands for ∂Ω: it absorbs mass from a cell at cost dist(center, ∂Ω)^p
    and supplies a point at cost dist(point, ∂Ω)^p, without capacity limits.
    """
    _check_p(p)
    _check_dims(grid, cloud)
    lo = np.asarray(omega[0], float).reshape(grid.d)
    hi = np.asarray(omega[1], float).reshape(grid.d)
    if np.any(hi <= lo):
        raise ValidationError("omega must have positive volume")
    if np.any(lo < grid.lo - 1e-12) or np.any(hi > grid.hi + 1e-12):
        raise ValidationError("omega must lie inside the grid bounding box")
    _, centers, masses = grid.support()
    cin = _inside(centers, lo, hi)
    pin = _inside(cloud.points, lo, hi)
    xc, mc = centers[cin], masses[cin]
    yp = cloud.points[pin]
    wp = np.full(len(yp), cloud.weight_each)
    dc = _boundary_distance(xc, lo, hi) ** p
    dp = _boundary_distance(yp, lo, hi) ** p
    if len(xc) == 0 or len(yp) == 0:
        return (float(np.dot(mc, dc)) + float(np.dot(wp, dp))) ** (1.0 / p)
    diff = xc[:, None, :] - yp[None, :, :]
    cost = np.empty((len(xc) + 1, len(yp) + 1))
    cost[:-1, :-1] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) ** p
    cost[:-1, -1] = dc
    cost[-1, :-1] = dp
    cost[-1, -1] = 0.0
    supply = np.concatenate([mc, [wp.sum()]])
    demand = np.concatenate([wp, [mc.sum()]])
    value, _ = solve_dense(supply, demand, cost)
    return max(value, 0.0) ** (1.0 / p)
