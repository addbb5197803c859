"""Explicit quantizers: exact 1D ones and the constructive ones from the theory."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InsufficientMass, OutOfDomain, TooCoarse, ValidationError
from ..measure import GridDensity, moment
from ..transport import PointCloud
from .centroid import weighted_p_centroid

GOLDEN_TOL = 1e-12
HEX_SHIFTS = 5


def midpoint_1d(n) -> PointCloud:
    """Points (2i-1)/(2n), i = 1..n."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    return PointCloud((2 * np.arange(1, n + 1) - 1) / (2 * n))


# ---------------------------------------------------------------------------
# 1D quantile chunks
# ---------------------------------------------------------------------------


def _antiderivative(t, p):
    return np.sign(t) * np.abs(t) ** (p + 1) / (p + 1)


def _quantile_pieces(grid: GridDensity, n):
    """Split the piecewise-uniform 1D density at mass multiples of total/n.

    Returns per-piece (chunk index, x0, x1, density) and a quantile function.
    """
    m = grid.masses.ravel()
    keep = np.flatnonzero(m > 0)
    m = m[keep]
    left = grid.origin[0] + grid.h * keep
    cm = np.concatenate([[0.0], np.cumsum(m)])
    cq = cm[-1] * np.arange(n + 1) / n
    cuts = np.union1d(cm, cq)
    lo, hi = cuts[:-1], cuts[1:]
    seg = hi > lo
    lo, hi = lo[seg], hi[seg]
    mid = 0.5 * (lo + hi)
    k = np.clip(np.searchsorted(cm, mid, side="right") - 1, 0, len(m) - 1)
    chunk = np.clip(np.searchsorted(cq, mid, side="right") - 1, 0, n - 1)
    rho = m[k] / grid.h
    x0 = left[k] + (lo - cm[k]) / rho
    x1 = left[k] + (hi - cm[k]) / rho

    def quantile(s):
        j = np.clip(np.searchsorted(cm, s, side="right") - 1, 0, len(m) - 1)
        return left[j] + (s - cm[j]) / (m[j] / grid.h)

    return chunk, x0, x1, rho, cq, quantile


def chunk_1d(grid: GridDensity, n, p) -> PointCloud:
    """p-centers of the n consecutive quantile chunks of a 1D grid density.

    The density is constant inside each cell. p=2 takes the chunk mean, p=1
    the chunk median, other p a golden-section search (bracket below 1e-12).
    """
    if grid.d != 1:
        raise DimensionMismatch("chunk_1d needs d = 1")
    if not grid.total > 0:
        raise ValidationError("grid has no mass")
    if n < 1:
        raise ValidationError("n must be >= 1")
    chunk, x0, x1, rho, cq, quantile = _quantile_pieces(grid, n)
    if p == 2:
        mass = rho * (x1 - x0)
        first = np.bincount(chunk, weights=mass * 0.5 * (x0 + x1), minlength=n)
        pts = first / np.bincount(chunk, weights=mass, minlength=n)
    elif p == 1:
        pts = quantile(0.5 * (cq[:-1] + cq[1:]))
    else:
        a = np.bincount(chunk, weights=np.zeros_like(x0), minlength=n) + np.inf
        np.minimum.at(a, chunk, x0)
        b = np.full(n, -np.inf)
        np.maximum.at(b, chunk, x1)

        def f(c):
            parts = rho * (_antiderivative(x1 - c[chunk], p) - _antiderivative(x0 - c[chunk], p))
            return np.bincount(chunk, weights=parts, minlength=n)

        g = (math.sqrt(5) - 1) / 2
        c1 = b - g * (b - a)
        c2 = a + g * (b - a)
        f1, f2 = f(c1), f(c2)
        while np.max(b - a) > GOLDEN_TOL:
            left = f1 < f2
            # minimum lies in [a, c2] where f1 < f2, else in [c1, b]
            b = np.where(left, c2, b)
            a = np.where(left, a, c1)
            n1 = np.where(left, b - g * (b - a), c2)
            n2 = np.where(left, c1, a + g * (b - a))
            c1, c2 = n1, n2
            f1, f2 = f(c1), f(c2)
        pts = 0.5 * (a + b)
    return PointCloud(pts, grid.total)


# ---------------------------------------------------------------------------
# scale-and-copy, dimension induction
# ---------------------------------------------------------------------------


def scale_copy(base: PointCloud, k) -> PointCloud:
    """The k^d·m points (i + x_j)/k for i in {0..k-1}^d."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    pts = base.points
    if (pts < 0).any() or (pts > 1).any():
        raise OutOfDomain("base points must lie in the unit cube")
    shifts = np.array(list(itertools.product(range(k), repeat=base.d)), dtype=float)
    out = (shifts[:, None, :] + pts[None, :, :]) / k
    return PointCloud(out.reshape(-1, base.d), base.total)


def dim_induct(cloud_hi: PointCloud, cloud_lo: PointCloud) -> PointCloud:
    """(x_i, n t_i/(n+l)) for the n points (x_i, t_i) of ``cloud_hi``, then (y_j, 1)."""
    if cloud_hi.d != cloud_lo.d + 1:
        raise DimensionMismatch("cloud_hi must have one more coordinate than cloud_lo")
    n, l = cloud_hi.n, cloud_lo.n
    top = cloud_hi.points.copy()
    top[:, -1] *= n / (n + l)
    bottom = np.hstack([cloud_lo.points, np.ones((l, 1))])
    return PointCloud(np.vstack([top, bottom]), cloud_hi.total)


def induction_constant(p):
    return max(1.0, 2.0 ** (p / 2 - 1))


# ---------------------------------------------------------------------------
# Pierce-type greedy extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PierceResult:
    """Points plus the per-step record of the extraction.

    ``radii[k]``, ``cube_mass[k]`` (mass of the remaining measure inside the
    cube of that radius), ``diameters[k]`` (diameter of the union of cells the
    extracted mass came from) and ``bounds[k]`` refer to step k+1.
    """

    cloud: PointCloud
    radii: np.ndarray
    cube_mass: np.ndarray
    diameters: np.ndarray
    bounds: np.ndarray
    moment: float
    theta: float

    @property
    def bounds_hold(self):
        return bool(np.all(self.diameters <= self.bounds * (1 + 1e-12)))


def pierce_greedy(grid: GridDensity, n, theta, p) -> PierceResult:
    """Greedy extraction of n-1 pieces of mass total/n, origin carries the rest.

    Step k restricts the remaining mass to [-r_k, r_k]^d with
    r_k = (2nM/(n-k))^{1/θ}, M the θ-moment, then descends dyadically into the
    heaviest child cube while that child still holds total/n, takes total/n
    from the final cube in cell order (one cell split) and places a point at
    the p-center of what it took.
    """
    d = grid.d
    if n < 2:
        raise ValidationError("pierce_greedy needs n >= 2")
    if p < d and not theta > p * d / (d - p):
        raise ValidationError(f"theta must exceed p*d/(d-p) = {p * d / (d - p)!r}")
    flat, centers, masses = grid.support()
    M = moment(grid, theta)
    w = grid.total / n
    remaining = masses.astype(float).copy()
    h = grid.h
    slack = h * math.sqrt(d)
    pts, radii, cube_mass, diameters, bounds = [], [], [], [], []
    for k in range(1, n):
        r = (2 * n * M / (n - k)) ** (1.0 / theta) if M > 0 else 0.0
        inside = np.flatnonzero((np.abs(centers) <= r).all(axis=1) & (remaining > 0))
        nu = float(remaining[inside].sum())
        if nu < w * (1 - 1e-12):
            raise InsufficientMass(f"step {k}: only {nu!r} mass within radius {r!r}")
        lo = np.full(d, -r)
        side = 2 * r
        cells = inside
        while side > h:
            half = side / 2
            bits = (centers[cells] >= lo + half).astype(np.int64)
            code = bits @ (1 << np.arange(d))
            child_mass = np.bincount(code, weights=remaining[cells], minlength=1 << d)
            best = int(np.argmax(child_mass))
            if child_mass[best] < w * (1 - 1e-12):
                break
            cells = cells[code == best]
            lo = lo + half * ((best >> np.arange(d)) & 1)
            side = half
        cells = np.sort(cells)
        take = np.zeros(len(cells))
        cum = np.cumsum(remaining[cells])
        full = cum <= w
        take[full] = remaining[cells][full]
        j = int(np.searchsorted(cum, w, side="left"))
        if j < len(cells) and not full[j]:
            take[j] = w - (cum[j - 1] if j > 0 else 0.0)
        used = take > 0
        remaining[cells] -= take
        remaining[remaining < 1e-18 * grid.total] = 0.0
        xs = centers[cells[used]]
        pts.append(weighted_p_centroid(take[used], xs, p))
        ext = xs.max(axis=0) - xs.min(axis=0) + h
        radii.append(r)
        cube_mass.append(nu)
        diameters.append(float(np.linalg.norm(ext)))
        bounds.append(4 * math.sqrt(d) * r * (n * nu / grid.total) ** (-1.0 / d) + slack)
    pts.append(np.zeros(d))
    return PierceResult(PointCloud(np.array(pts), grid.total), np.array(radii), np.array(cube_mass),
                        np.array(diameters), np.array(bounds), M, float(theta))


# ---------------------------------------------------------------------------
# hexagonal construction in the plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HexResult:
    cloud: PointCloud
    interior: int
    piece_masses: np.ndarray
    circumradius: float
    shift: tuple


def _hex_lattice(lo, hi, R, shift):
    """Flat-top hexagon centers (circumradius R) covering [lo, hi], anchored at lo."""
    dx, dy = 1.5 * R, math.sqrt(3) * R
    i0 = int(math.floor((lo[0] - 2 * R - lo[0]) / dx)) - 1
    i1 = int(math.ceil((hi[0] + 2 * R - lo[0]) / dx)) + 1
    j0 = int(math.floor((lo[1] - 2 * R - lo[1]) / dy)) - 1
    j1 = int(math.ceil((hi[1] + 2 * R - lo[1]) / dy)) + 1
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    x = lo[0] + shift[0] + dx * ii
    y = lo[1] + shift[1] + dy * (jj + 0.5 * (ii & 1))
    return np.column_stack([x.ravel(), y.ravel()])


def _interior_centers(cand, region, R):
    margin = 2 * R
    if region == "square":
        ok = ((cand[:, 0] - R > margin) & (cand[:, 0] + R < 1 - margin)
              & (cand[:, 1] - math.sqrt(3) / 2 * R > margin)
              & (cand[:, 1] + math.sqrt(3) / 2 * R < 1 - margin))
    else:
        ok = np.hypot(cand[:, 0], cand[:, 1]) + R < 1 - margin
    return cand[ok]


def _in_hexagon(x, c, R):
    """Membership of points x (m, 2) in the flat-top hexagon at c."""
    u = np.abs(x - c)
    s3 = math.sqrt(3)
    return (u[:, 1] <= s3 / 2 * R) & (s3 * u[:, 0] + u[:, 1] <= s3 * R)


def _arc_parameter(x, region):
    if region == "disk":
        return np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * math.pi)
    # counterclockwise perimeter coordinate of the nearest boundary point
    dist = np.column_stack([x[:, 1], 1 - x[:, 0], 1 - x[:, 1], x[:, 0]])
    side = np.argmin(dist, axis=1)
    along = np.choose(side, [x[:, 0], x[:, 1], 1 - x[:, 0], 1 - x[:, 1]])
    return side + along


def hex_2d(grid: GridDensity, n, region="square", p=2) -> HexResult:
    """Hexagon centers deep inside the region plus p-centers of boundary strip pieces.

    Regions: ``square`` = [0,1]^2 and ``disk`` = unit disk at the origin. The
    plane is tiled by flat-top regular hexagons of area |A|/n anchored at the
    region's lower-left corner; of 5x5 lattice shifts the one with the most
    interior hexagons is kept. The leftover strip is cut in boundary-arc order
    into n - k equal-mass pieces.
    """
    if grid.d != 2:
        raise DimensionMismatch("hex_2d needs d = 2")
    if region not in ("square", "disk"):
        raise ValidationError("region must be 'square' or 'disk'")
    area = 1.0 if region == "square" else math.pi
    lo = np.array([0.0, 0.0]) if region == "square" else np.array([-1.0, -1.0])
    hi = lo + (1.0 if region == "square" else 2.0)
    R = math.sqrt(2 * area / (3 * math.sqrt(3) * n))
    best = None
    for a in range(HEX_SHIFTS):
        for b in range(HEX_SHIFTS):
            shift = (1.5 * R * a / HEX_SHIFTS, math.sqrt(3) * R * b / HEX_SHIFTS)
            inner = _interior_centers(_hex_lattice(lo, hi, R, shift), region, R)
            if best is None or len(inner) > len(best[1]):
                best = (shift, inner)
    shift, inner = best
    k = len(inner)
    if k >= n:
        inner, k = inner[: n - 1], n - 1
    flat, centers, masses = grid.support()
    owned = np.zeros(len(flat), dtype=bool)
    for c in inner:
        owned |= _in_hexagon(centers, c, R)
    strip = np.flatnonzero(~owned)
    pieces = n - k
    if len(strip) < 4 * pieces:
        raise TooCoarse(f"{len(strip)} strip cells for {pieces} pieces (need 4 per piece)")
    t = _arc_parameter(centers[strip], region)
    order = strip[np.lexsort((flat[strip], t))]
    m = masses[order]
    cm = np.concatenate([[0.0], np.cumsum(m)])
    cuts = cm[-1] * np.arange(pieces + 1) / pieces
    pts = []
    piece_mass = []
    for i in range(pieces):
        a, b = cuts[i], cuts[i + 1]
        share = np.clip(np.minimum(cm[1:], b) - np.maximum(cm[:-1], a), 0.0, None)
        use = share > 0
        pts.append(weighted_p_centroid(share[use], centers[order[use]], p))
        piece_mass.append(math.fsum(share[use]))
    cloud = PointCloud(np.vstack([inner, np.array(pts)]), grid.total)
    return HexResult(cloud, k, np.array(piece_mass), R, shift)
