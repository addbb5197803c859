"""Analytic measure specifications and their regular-grid discretizations.

A :class:`GridDensity` stores the exact mass of every cubic cell of an
axis-aligned grid. Downstream solvers treat each cell as an atom located at
the cell center, except where a routine explicitly integrates the
piecewise-constant density (see :func:`eqq.transport.w1d_exact`).
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import EmptyMeasure, TailTooHeavy, ValidationError
from .fileio import atomic_write_text, fmt, read_json, write_json

GAUSSIAN_TAIL_TOL = 1e-6
MIXTURE_WEIGHT_TOL = 1e-12


# ---------------------------------------------------------------------------
# specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformCube:
    """Uniform law on the unit cube [0, 1]^d."""

    d: int
    total: float = 1.0


@dataclass(frozen=True, eq=False)
class UniformSet:
    """Uniform law on a union of cells of an indicator grid spanning [lo, hi]."""

    d: int
    indicator: np.ndarray
    lo: tuple
    hi: tuple
    total: float = 1.0

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.ndim != self.d:
            raise ValidationError("indicator rank must equal d")
        if not ind.any():
            raise EmptyMeasure("indicator selects no cell")
        object.__setattr__(self, "indicator", ind)
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))


@dataclass(frozen=True)
class Gaussian:
    d: int
    mean: tuple
    sigma: float
    total: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        if len(self.mean) != self.d:
            raise ValidationError("gaussian mean must have d entries")
        if not self.sigma > 0:
            raise ValidationError("gaussian sigma must be positive")


@dataclass(frozen=True)
class TwoBlocks:
    """Mass 1-beta on A = [0,1]^d and beta on B = A + shift."""

    d: int
    shift: tuple
    beta: float = 0.5
    total: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))
        if len(self.shift) != self.d:
            raise ValidationError("shift must have d entries")
        if not 0.0 < self.beta < 1.0:
            raise ValidationError("beta must lie in (0, 1)")
        if self.gap <= 0:
            raise ValidationError("the two blocks must be at positive distance")

    @property
    def gap(self):
        """dist(A, B) for two axis-aligned unit cubes."""
        excess = np.maximum(np.abs(np.asarray(self.shift)) - 1.0, 0.0)
        return float(np.linalg.norm(excess))


@dataclass(frozen=True)
class SegmentSingular:
    """Normalized arc length on the segment [a, b] (a singular measure)."""

    d: int
    a: tuple
    b: tuple
    total: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != self.d or len(self.b) != self.d:
            raise ValidationError("segment endpoints must have d entries")
        if self.a == self.b:
            raise ValidationError("segment endpoints must be distinct")


@dataclass(frozen=True)
class Mixture:
    parts: tuple  # of (weight, spec)
    total: float = 1.0

    def __post_init__(self):
        parts = tuple((float(w), s) for w, s in self.parts)
        if not parts:
            raise ValidationError("mixture needs at least one part")
        ws = [w for w, _ in parts]
        if any(w < 0 or w > 1 for w in ws):
            raise ValidationError("mixture weights must lie in [0, 1]")
        if abs(math.fsum(ws) - 1.0) > MIXTURE_WEIGHT_TOL:
            raise ValidationError("mixture weights must sum to 1")
        if len({s.d for _, s in parts}) != 1:
            raise ValidationError("mixture parts must share the dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def d(self):
        return self.parts[0][1].d


MeasureSpec = UniformCube | UniformSet | Gaussian | TwoBlocks | SegmentSingular | Mixture



def spec_from_dict(obj) -> MeasureSpec:
    kind = obj.get("kind")
    total = float(obj.get("total", 1.0))
    if kind == "uniform_cube":
        return UniformCube(int(obj["d"]), total)
    if kind == "uniform_set":
        d = int(obj["d"])
        if "indicator" in obj:
            ind = np.asarray(obj["indicator"], dtype=bool)
        else:
            ind = np.ones((1,) * d, dtype=bool)
        return UniformSet(d, ind, obj["lo"], obj["hi"], total)
    if kind == "gaussian":
        return Gaussian(int(obj["d"]), obj["mean"], float(obj["sigma"]), total)
    if kind == "two_blocks":
        return TwoBlocks(int(obj["d"]), obj["shift"], float(obj.get("beta", 0.5)), total)
    if kind == "segment_singular":
        return SegmentSingular(int(obj["d"]), obj["a"], obj["b"], total)
    if kind == "mixture":
        parts = []
        for part in obj["parts"]:
            part = dict(part)
            w = part.pop("w")
            parts.append((w, spec_from_dict(part)))
        return Mixture(tuple(parts), total)
    raise ValidationError(f"unknown measure kind {kind!r}")


def spec_to_dict(spec: MeasureSpec) -> dict:
    if isinstance(spec, UniformCube):
        out = {"kind": "uniform_cube", "d": spec.d}
    elif isinstance(spec, UniformSet):
        out = {
            "kind": "uniform_set",
            "d": spec.d,
            "lo": list(spec.lo),
            "hi": list(spec.hi),
            "indicator": spec.indicator.astype(int).tolist(),
        }
    elif isinstance(spec, Gaussian):
        out = {"kind": "gaussian", "d": spec.d, "mean": list(spec.mean), "sigma": spec.sigma}
    elif isinstance(spec, TwoBlocks):
        out = {"kind": "two_blocks", "d": spec.d, "shift": list(spec.shift), "beta": spec.beta}
    elif isinstance(spec, SegmentSingular):
        out = {"kind": "segment_singular", "d": spec.d, "a": list(spec.a), "b": list(spec.b)}
    elif isinstance(spec, Mixture):
        out = {"kind": "mixture", "parts": [{"w": w, **spec_to_dict(s)} for w, s in spec.parts]}
    else:
        raise ValidationError(f"not a measure spec: {spec!r}")
    if spec.total != 1.0:
        out["total"] = spec.total
    return out


def load_spec(path) -> MeasureSpec:
    return spec_from_dict(read_json(path))


def disk_set(radius=1.0, center=(0.0, 0.0), resolution=1024) -> UniformSet:
    """Uniform law on a disk, represented by a fine cell-center indicator."""
    cx, cy = center
    lo = (cx - radius, cy - radius)
    hi = (cx + radius, cy + radius)
    t = (np.arange(resolution) + 0.5) / resolution * 2 * radius - radius
    xx, yy = np.meshgrid(t, t, indexing="ij")
    return UniformSet(2, xx**2 + yy**2 < radius**2, lo, hi)


def default_bbox(spec: MeasureSpec):
    """Bounding box (lo, hi) capturing the spec up to the Gaussian tail tolerance."""
    if isinstance(spec, UniformCube):
        return np.zeros(spec.d), np.ones(spec.d)
    if isinstance(spec, UniformSet):
        return np.asarray(spec.lo), np.asarray(spec.hi)
    if isinstance(spec, Gaussian):
        # per-axis tail t with 1-(1-t)^d <= tol/2
        t = -math.expm1(math.log1p(-GAUSSIAN_TAIL_TOL / 2) / spec.d)
        half = -_norm_ppf(t / 2) * spec.sigma
        m = np.asarray(spec.mean)
        return m - half, m + half
    if isinstance(spec, TwoBlocks):
        s = np.asarray(spec.shift)
        return np.minimum(0.0, s), np.maximum(1.0, 1.0 + s)
    if isinstance(spec, SegmentSingular):
        a, b = np.asarray(spec.a), np.asarray(spec.b)
        pad = 0.05 * np.linalg.norm(b - a)
        return np.minimum(a, b) - pad, np.maximum(a, b) + pad
    if isinstance(spec, Mixture):
        boxes = [default_bbox(s) for _, s in spec.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)
    raise ValidationError(f"not a measure spec: {spec!r}")


def _norm_ppf(q):
    from scipy.special import ndtri

    return float(ndtri(q))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell masses of a cubic-cell grid; cell ``i`` has center origin + h*(i + 1/2)."""

    d: int
    shape: tuple
    origin: np.ndarray
    h: float
    masses: np.ndarray
    total: float
    singular_support_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).reshape(self.shape)
        if masses.ndim != self.d:
            raise ValidationError("masses rank must equal d")
        if (masses < 0).any():
            raise ValidationError("cell masses must be nonnegative")
        if not self.h > 0:
            raise ValidationError("spacing must be positive")
        origin = np.array(self.origin, dtype=float).reshape(self.d)
        sing = np.unique(np.asarray(self.singular_support_cells, dtype=np.int64))
        for arr in (masses, origin, sing):
            arr.flags.writeable = False
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "singular_support_cells", sing)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "total", float(self.total))

    @property
    def ncells(self):
        return int(np.prod(self.shape))

    @property
    def lo(self):
        return self.origin

    @property
    def hi(self):
        return self.origin + self.h * np.asarray(self.shape)

    def centers(self, flat_index=None):
        """Centers of all cells (C order) or of the given flat indices."""
        if flat_index is None:
            flat_index = np.arange(self.ncells)
        idx = np.stack(np.unravel_index(np.asarray(flat_index), self.shape), axis=-1)
        return self.origin + self.h * (idx + 0.5)

    def support(self):
        """(flat indices, centers, masses) of the cells with positive mass."""
        flat = np.flatnonzero(self.masses.ravel() > 0)
        return flat, self.centers(flat), self.masses.ravel()[flat]

    def density(self):
        return self.masses / self.h**self.d

    def with_masses(self, masses, singular_support_cells=None):
        masses = np.asarray(masses, float).reshape(self.shape)
        sing = self.singular_support_cells if singular_support_cells is None else singular_support_cells
        return GridDensity(self.d, self.shape, self.origin, self.h, masses, float(masses.sum()), sing)

    def translated(self, v):
        return GridDensity(self.d, self.shape, self.origin + np.asarray(v, float), self.h,
                           self.masses, self.total, self.singular_support_cells)

    def dilated(self, lam):
        """Image under x -> lam*x (lam > 0); masses unchanged."""
        return GridDensity(self.d, self.shape, self.origin * lam, self.h * lam,
                           self.masses, self.total, self.singular_support_cells)


def _axis_edges(lo, h, count):
    return lo + h * np.arange(count + 1)


def _overlap_1d(edges, a, b):
    """Length of [e_i, e_{i+1}] ∩ [a, b] for each grid interval."""
    return np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)


def _outer(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def _cube_masses(edges, lo, hi):
    vol = float(np.prod(np.asarray(hi) - np.asarray(lo)))
    return _outer([_overlap_1d(e, l, u) for e, l, u in zip(edges, lo, hi)]) / vol


def _set_masses(spec: UniformSet, edges):
    ind = spec.indicator.astype(float)
    out = ind
    for axis, e in enumerate(edges):
        k = ind.shape[axis]
        ie = np.linspace(spec.lo[axis], spec.hi[axis], k + 1)
        # overlap[grid cell, indicator cell]
        ov = np.clip(
            np.minimum(e[1:, None], ie[None, 1:]) - np.maximum(e[:-1, None], ie[None, :-1]), 0.0, None
        )
        out = np.tensordot(ov, out, axes=([1], [axis]))
        out = np.moveaxis(out, 0, axis)
    cell_vol = np.prod([(spec.hi[a] - spec.lo[a]) / ind.shape[a] for a in range(spec.d)])
    return out / (cell_vol * ind.sum())


def _gauss_masses(spec: Gaussian, edges):
    factors = []
    for axis, e in enumerate(edges):
        cdf = ndtr((e - spec.mean[axis]) / spec.sigma)
        factors.append(np.diff(cdf))
    return _outer(factors)


def _segment_masses(spec: SegmentSingular, edges, shape):
    a, b = np.asarray(spec.a), np.asarray(spec.b)
    ts = [0.0, 1.0]
    for axis, e in enumerate(edges):
        da = b[axis] - a[axis]
        if da != 0:
            t = (e - a[axis]) / da
            ts.extend(t[(t > 0) & (t < 1)].tolist())
    ts = np.unique(ts)
    mids = a + np.outer(0.5 * (ts[1:] + ts[:-1]), b - a)
    lengths = np.diff(ts)
    out = np.zeros(shape)
    idx = []
    inside = np.ones(len(mids), dtype=bool)
    for axis, e in enumerate(edges):
        i = np.searchsorted(e, mids[:, axis], side="right") - 1
        inside &= (i >= 0) & (i < shape[axis])
        idx.append(np.clip(i, 0, shape[axis] - 1))
    np.add.at(out, tuple(i[inside] for i in idx), lengths[inside])
    return out


def _raw_masses(spec, edges, shape):
    """Probability masses per cell (before renormalization) and singular cells."""
    if isinstance(spec, UniformCube):
        return _cube_masses(edges, np.zeros(spec.d), np.ones(spec.d)), None
    if isinstance(spec, UniformSet):
        return _set_masses(spec, edges), None
    if isinstance(spec, Gaussian):
        return _gauss_masses(spec, edges), None
    if isinstance(spec, TwoBlocks):
        s = np.asarray(spec.shift)
        lo = np.zeros(spec.d)
        m = (1 - spec.beta) * _cube_masses(edges, lo, lo + 1) + spec.beta * _cube_masses(edges, s, s + 1)
        return m, None
    if isinstance(spec, SegmentSingular):
        m = _segment_masses(spec, edges, shape)
        return m, np.flatnonzero(m.ravel() > 0)
    if isinstance(spec, Mixture):
        out = np.zeros(shape)
        sing = []
        for w, part in spec.parts:
            m, s = _raw_masses(part, edges, shape)
            out += w * m
            if s is not None and w > 0:
                sing.append(s)
        return out, (np.unique(np.concatenate(sing)) if sing else None)
    raise ValidationError(f"not a measure spec: {spec!r}")


def build_grid(spec: MeasureSpec, resolution, bbox=None, truncate_ok=False) -> GridDensity:
    """Discretize ``spec`` on a grid of ``resolution`` cubic cells covering ``bbox``.

    ``resolution`` is an int (same count on every axis) or a per-axis sequence;
    ``bbox`` is ``(lo, hi)`` and defaults to :func:`default_bbox`. Cells must be
    cubes: all axes need the same spacing.
    """
    d = spec.d
    lo, hi = default_bbox(spec) if bbox is None else (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
    lo = np.broadcast_to(np.asarray(lo, float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(hi, float), (d,)).copy()
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (d,))
    if (res < 1).any():
        raise ValidationError("resolution must be >= 1 on every axis")
    if not (hi > lo).all():
        raise ValidationError("bbox must have positive volume")
    steps = (hi - lo) / res
    h = float(steps[0])
    if not np.allclose(steps, h, rtol=1e-12, atol=0):
        raise ValidationError("cells must be cubic: bbox extents / resolution must agree")
    shape = tuple(int(r) for r in res)
    edges = [_axis_edges(lo[a], h, shape[a]) for a in range(d)]
    raw, sing = _raw_masses(spec, edges, shape)
    raw = np.clip(raw, 0.0, None)
    captured = float(raw.sum())
    if captured <= 0:
        raise EmptyMeasure("all cell masses vanish")
    if 1.0 - captured > GAUSSIAN_TAIL_TOL and not truncate_ok:
        raise TailTooHeavy(f"bbox captures only {captured!r} of the mass")
    masses = raw * (spec.total / captured)
    return GridDensity(d, shape, lo, h, masses, spec.total, sing if sing is not None else np.zeros(0, np.int64))


def build_grid_auto(spec: MeasureSpec, min_cells, bbox=None, truncate_ok=False) -> GridDensity:
    """Grid with cubic cells and at least ``min_cells`` cells over (an enlargement of) bbox."""
    lo, hi = default_bbox(spec) if bbox is None else (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
    ext = hi - lo
    r = max(1, int(math.ceil((min_cells * ext.max() ** spec.d / ext.prod()) ** (1 / spec.d) - 1e-9)))
    while True:
        h = ext.max() / r
        counts = np.maximum(1, np.ceil(ext / h - 1e-9)).astype(int)
        if counts.prod() >= min_cells:
            break
        r += 1
    return build_grid(spec, counts, (lo, lo + h * counts), truncate_ok=truncate_ok)


def moment(grid: GridDensity, theta: float) -> float:
    """Midpoint-rule θ-th moment: Σ_c m_c ‖center(c)‖^θ."""
    if theta < 1:
        raise ValidationError("theta must be >= 1")
    _, x, m = grid.support()
    return float(np.sum(m * np.linalg.norm(x, axis=1) ** theta))


def density_functional(grid: GridDensity, exponent: float, exclude_singular_support=False) -> float:
    """Σ_c (m_c/h^d)^b h^d, optionally skipping the declared singular cells."""
    if not 0 < exponent <= 1:
        raise ValidationError("exponent must lie in (0, 1]")
    vol = grid.h**grid.d
    rho = grid.masses.ravel() / vol
    keep = rho > 0
    if exclude_singular_support and grid.singular_support_cells.size:
        keep[grid.singular_support_cells] = False
    return float(np.sum(rho[keep] ** exponent) * vol)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def write_grid(path, grid: GridDensity):
    """JSON header at ``path`` plus ``<stem>.csv`` with (flat_index, mass) rows."""
    path = os.fspath(path)
    stem, _ = os.path.splitext(path)
    csv_path = stem + ".csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["flat_index", "mass"])
    flat = grid.masses.ravel()
    for i in np.flatnonzero(flat > 0):
        w.writerow([int(i), fmt(flat[i])])
    atomic_write_text(csv_path, buf.getvalue())
    header = {
        "d": grid.d,
        "shape": list(grid.shape),
        "origin": [float(v) for v in grid.origin],
        "h": grid.h,
        "total": grid.total,
        "singular_support_cells": [int(i) for i in grid.singular_support_cells],
        "masses_csv": os.path.basename(csv_path),
    }
    write_json(path, header)


def read_grid(path) -> GridDensity:
    header = read_json(path)
    csv_path = os.path.join(os.path.dirname(os.fspath(path)), header["masses_csv"])
    masses = np.zeros(int(np.prod(header["shape"])))
    with open(csv_path) as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            masses[int(row[0])] = float(row[1])
    return GridDensity(
        int(header["d"]),
        tuple(header["shape"]),
        np.asarray(header["origin"], float),
        float(header["h"]),
        masses.reshape(header["shape"]),
        float(header["total"]),
        np.asarray(header.get("singular_support_cells", []), dtype=np.int64),
    )


def coarsen(grid: GridDensity, factor=2) -> GridDensity:
    """Merge ``factor^d`` blocks of cells; every axis count must be divisible by ``factor``."""
    if any(s % factor for s in grid.shape):
        raise ValidationError(f"shape {grid.shape} is not divisible by {factor}")
    shape = tuple(s // factor for s in grid.shape)
    split = []
    for s in shape:
        split += [s, factor]
    masses = grid.masses.reshape(split).sum(axis=tuple(range(1, 2 * grid.d, 2)))
    sing = np.zeros(0, dtype=np.int64)
    if grid.singular_support_cells.size:
        idx = np.unravel_index(grid.singular_support_cells, grid.shape)
        sing = np.ravel_multi_index(tuple(i // factor for i in idx), shape)
    return GridDensity(grid.d, shape, grid.origin, grid.h * factor, masses, grid.total, sing)
