"""n-sweeps, coefficient and rate estimates, and the asymptotic bound functionals."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    DegenerateFit,
    DimensionMismatch,
    EmptySweep,
    EqqError,
    ExponentOutOfRange,
    ValidationError,
)
from .fileio import atomic_write_text, fmt, read_json, write_json
from .measure import GridDensity, MeasureSpec, build_grid, build_grid_auto, density_functional, spec_to_dict
from .quantize.lloyd import OptimizerConfig, _map, best_quantizer
from .transport import SOLVER_LIMIT

CSV_HEADER = ("n", "method", "p", "d", "error", "scaled_error", "seed", "restarts", "runtime_ms")
CELLS_PER_POINT = 64
DROP_FRACTION = 0.2


@dataclass(frozen=True)
class SweepRow:
    n: int
    method: str
    p: float
    d: int
    error: float
    scaled_error: float
    seed: int
    restarts: int
    runtime_ms: float | None = None
    failure: str | None = None

    @property
    def ok(self):
        return self.failure is None and math.isfinite(self.error)


def _row(n, method, p, d, error, seed, restarts, runtime_ms=None, failure=None):
    scaled = n ** (1.0 / d) * error if math.isfinite(error) else math.nan
    return SweepRow(int(n), method, float(p), int(d), float(error), float(scaled), int(seed),
                    int(restarts), runtime_ms, failure)


@dataclass
class SweepResult:
    """Rows ordered by (n, method) plus the grid used for each n.

    ``grid_resolution`` maps n to the per-axis cell counts. The CSV carries only
    the fixed header; resolution, measure tag and failures go to a JSON sidecar.
    """

    rows: list
    measure_id: str
    grid_resolution: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.n, r.method))

    @property
    def d(self):
        ds = {r.d for r in self.rows}
        if len(ds) > 1:
            raise DimensionMismatch(f"sweep mixes dimensions {sorted(ds)}")
        return ds.pop() if ds else None

    def methods(self):
        return sorted({r.method for r in self.rows})

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.n, r.method, fmt(r.p), r.d, fmt(r.error), fmt(r.scaled_error), r.seed,
                        r.restarts, "" if r.runtime_ms is None else fmt(r.runtime_ms)])
        return buf.getvalue()

    def meta(self):
        return {
            "measure_id": self.measure_id,
            "grid_resolution": {str(n): list(res) for n, res in sorted(self.grid_resolution.items())},
            "failures": [{"n": r.n, "method": r.method, "failure": r.failure}
                         for r in self.rows if r.failure is not None],
        }

    def write(self, path):
        """CSV at ``path`` and metadata at ``path + '.json'``, both atomic."""
        atomic_write_text(path, self.to_csv())
        write_json(str(path) + ".json", self.meta())

    @classmethod
    def read(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_HEADER:
                raise ValidationError(f"{path}: expected header {','.join(CSV_HEADER)}")
            rows = []
            for rec in reader:
                if not rec:
                    continue
                n, method, p, d, error, scaled, seed, restarts, rt = rec
                rows.append(SweepRow(int(n), method, float(p), int(d), float(error), float(scaled),
                                     int(seed), int(restarts), float(rt) if rt else None))
        meta = {}
        try:
            meta = read_json(str(path) + ".json")
        except FileNotFoundError:
            pass
        failed = {(f["n"], f["method"]): f["failure"] for f in meta.get("failures", [])}
        if failed:
            rows = [SweepRow(**{**r.__dict__, "failure": failed.get((r.n, r.method))}) for r in rows]
        res = {int(k): tuple(v) for k, v in meta.get("grid_resolution", {}).items()}
        return cls(rows, meta.get("measure_id", ""), res)


def measure_tag(spec: MeasureSpec):
    obj = spec_to_dict(spec)
    return obj["kind"] + ("" if "d" not in obj else f"_d{obj['d']}")


def _check_n_list(n_list):
    ns = [int(n) for n in n_list]
    if not ns:
        raise ValidationError("n_list must be nonempty")
    if any(n < 1 for n in ns):
        raise ValidationError("every n must be >= 1")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValidationError("n_list must be strictly increasing")
    return ns


def sweep(spec: MeasureSpec, p, n_list, methods, cfg: OptimizerConfig = OptimizerConfig(),
          grid_resolution=None, *, cells_per_point=CELLS_PER_POINT, bbox=None, truncate_ok=False,
          measure_id=None, polish=False, region="square", theta=None, limit=SOLVER_LIMIT,
          timing=False, out_path=None) -> SweepResult:
    """Run best_quantizer for every (n, method) and collect the errors.

    With ``grid_resolution`` one grid is built and reused; otherwise each n
    gets the smallest cubic grid with at least ``cells_per_point * n`` cells.
    A failing row is kept with error NaN and its failure recorded; the sweep
    finishes, writes ``out_path`` if given, and then re-raises the first error.
    ``runtime_ms`` stays blank unless ``timing`` is set, so reruns are
    byte-identical.
    """
    if not (np.isfinite(p) and p >= 1):
        raise ValidationError("p must be a finite number >= 1")
    ns = _check_n_list(n_list)
    methods = sorted(set(methods))
    if not methods:
        raise ValidationError("methods must be nonempty")
    tag = measure_id or measure_tag(spec)
    grids = {}
    if grid_resolution is not None:
        shared = build_grid(spec, grid_resolution, bbox, truncate_ok)
        grids = {n: shared for n in ns}
    else:
        for n in ns:
            grids[n] = build_grid_auto(spec, cells_per_point * n, bbox, truncate_ok)

    def job(item):
        n, method = item
        t0 = time.perf_counter()
        try:
            res = best_quantizer(grids[n], n, p, [method], cfg, polish, region, theta, limit)
        except EqqError as exc:
            return _row(n, method, p, spec.d, math.nan, cfg.seed, cfg.restarts,
                        failure=f"{exc.code}: {exc}"), exc
        ms = (time.perf_counter() - t0) * 1e3 if timing else None
        restarts = res.restarts
        return _row(n, method, p, spec.d, res.cost, res.seed_used, restarts, ms), None

    outcomes = _map(job, [(n, m) for n in ns for m in methods])
    result = SweepResult([row for row, _ in outcomes], tag,
                         {n: tuple(int(s) for s in grids[n].shape) for n in ns})
    if out_path is not None:
        result.write(out_path)
    errors = [exc for _, exc in outcomes if exc is not None]
    if errors:
        raise errors[0]
    return result


@dataclass(frozen=True)
class CoefficientEstimate:
    value: float
    n: int
    method: str
    seed: int
    restarts: int
    resolution: tuple | None = None

    def to_json(self):
        return {
            "coefficient": self.value,
            "n": self.n,
            "method": self.method,
            "seed": self.seed,
            "restarts": self.restarts,
            "resolution": None if self.resolution is None else list(self.resolution),
        }


def _usable(sweep_result: SweepResult, method=None):
    rows = [r for r in sweep_result.rows if r.ok and (method is None or r.method == method)]
    if not rows:
        raise EmptySweep("no successful rows" + ("" if method is None else f" for method {method!r}"))
    return rows


def coefficient_estimate(sweep_result: SweepResult, d=None, method=None) -> CoefficientEstimate:
    """Smallest scaled error in the sweep: an upper estimate of the coefficient."""
    rows = _usable(sweep_result, method)
    if d is not None and any(r.d != d for r in rows):
        raise DimensionMismatch(f"sweep rows are not all in dimension {d}")
    best = min(rows, key=lambda r: (r.scaled_error, r.n, r.method))
    return CoefficientEstimate(best.scaled_error, best.n, best.method, best.seed, best.restarts,
                               sweep_result.grid_resolution.get(best.n))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_min: int
    n_max: int
    log_power: float = 0.0

    def to_json(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "window": [self.n_min, self.n_max], "log_power": self.log_power}


def rate_fit(sweep_result: SweepResult, method=None, drop_fraction=DROP_FRACTION, log_power=0.0) -> RateFit:
    """Least squares of log(error) against log(n).

    Uses the best error per n (over methods, unless ``method`` is given), drops
    the smallest ``drop_fraction`` of the n values while keeping at least three,
    and with ``log_power`` = a first divides errors by (1 + log n)^a, which tests
    the (1 + log n)^a n^slope model.
    """
    best = {}
    for r in _usable(sweep_result, method):
        if r.error > 0 and (r.n not in best or r.error < best[r.n]):
            best[r.n] = r.error
    if len(best) < 3:
        raise ValidationError("rate_fit needs at least 3 distinct n with positive error")
    ns = sorted(best)
    drop = min(int(math.floor(drop_fraction * len(ns))), len(ns) - 3)
    ns = ns[drop:]
    err = np.array([best[n] for n in ns])
    if np.all(err == err[0]):
        raise DegenerateFit("all errors are equal")
    x = np.log(np.array(ns, float))
    y = np.log(err) - log_power * np.log1p(x)
    fit = stats.linregress(x, y)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), ns[0], ns[-1], float(log_power))


@dataclass(frozen=True)
class BoundReport:
    p: float
    d: int
    zador_functional: float
    empirical_functional_full: float | None = None
    empirical_functional_excl: float | None = None
    q_lower_input: float | None = None
    q_upper_input: float | None = None
    rhs_L: float | None = None
    rhs_U: float | None = None
    rhs_zador: float | None = None

    def to_json(self):
        return dict(self.__dict__)


def bound_report(grid: GridDensity, p, d=None, q_lower=None, q_upper=None, empirical=True) -> BoundReport:
    """Density functionals of the empirical (p < d) and classical asymptotics.

    rhs_L = q_lower·(∫ off the singular support ρ^{(d-p)/d})^{1/p},
    rhs_U = q_upper·(∫ρ^{(d-p)/d})^{1/p} and
    rhs_zador = q_lower·(∫ρ^{d/(d+p)})^{(d+p)/(dp)}, each only when its
    coefficient is supplied.
    """
    d = grid.d if d is None else int(d)
    if d != grid.d:
        raise DimensionMismatch(f"grid has d={grid.d}, report asked for d={d}")
    if not (np.isfinite(p) and p >= 1):
        raise ValidationError("p must be a finite number >= 1")
    zador = density_functional(grid, d / (d + p))
    full = excl = rhs_l = rhs_u = None
    if empirical:
        if p >= d:
            raise ExponentOutOfRange(f"empirical functionals need p < d (p={p}, d={d})")
        b = (d - p) / d
        full = density_functional(grid, b)
        excl = density_functional(grid, b, exclude_singular_support=True)
        if q_lower is not None:
            rhs_l = q_lower * excl ** (1.0 / p)
        if q_upper is not None:
            rhs_u = q_upper * full ** (1.0 / p)
    rhs_z = None if q_lower is None else q_lower * zador ** ((d + p) / (d * p))
    return BoundReport(float(p), d, zador, full, excl,
                       None if q_lower is None else float(q_lower),
                       None if q_upper is None else float(q_upper), rhs_l, rhs_u, rhs_z)


def distant_bound(n, r, beta, p):
    """Lower bound (r/2)·(min(τ, 1-τ)/n)^{1/p}, τ = frac(n·beta), for two blocks at gap r."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0 < beta < 1:
        raise ValidationError("beta must lie in (0, 1)")
    if not r > 0:
        raise ValidationError("r must be positive")
    tau = n * beta - math.floor(n * beta)
    return (r / 2.0) * (min(tau, 1.0 - tau) / n) ** (1.0 / p)
