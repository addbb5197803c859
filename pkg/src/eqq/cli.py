"""Command-line interface: ``eqq {grid,quantize,error,sweep,coeff,report}``.

Exit status 0 on success, 2 on invalid input, 3 on solver failure. Errors are
reported on stderr as JSON ``{"error": code, "detail": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

from . import asympt
from .errors import EqqError, SolverError, SolverLimitExceeded
from .fileio import dumps, read_json, write_json
from .measure import build_grid, build_grid_auto, load_spec, read_grid, spec_from_dict, write_grid
from .quantize import OptimizerConfig, best_quantizer
from .quantize.lloyd import INITS, METHODS
from .transport import (
    SOLVER_LIMIT,
    cost_record,
    nearest_assignment_cost,
    read_cloud,
    solve_uniform_capacity,
    w1d_exact,
    wb_boundary,
    write_cloud,
)

COMMANDS = ("grid", "quantize", "error", "sweep", "coeff", "report")
MODES = ("capacity", "free", "w1d", "wb")
ALIASES = {
    "midpoint": "midpoint_1d",
    "chunk": "chunk_1d",
    "hex": "hex_2d",
    "pierce": "pierce_greedy",
    "capacity": "lloyd_capacity",
    "classical": "lloyd_classical",
}
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


@dataclass
class RunConfig:
    command: str
    spec_path: str | None = None
    grid_path: str | None = None
    cloud_path: str | None = None
    sweep_path: str | None = None
    output_path: str | None = None
    p: float | None = None
    d: int | None = None
    n: int | None = None
    n_list: tuple = ()
    methods: tuple = ()
    seed: int = 0
    restarts: int = 8
    resolution: tuple | None = None
    omega: tuple | None = None
    mode: str = "capacity"
    max_iters: int = 100
    tol: float = 1e-6
    init: str = "rho_sample"
    polish: bool = False
    region: str = "square"
    theta: float | None = None
    coarse_cells_per_point: int | None = None
    cells_per_point: int = asympt.CELLS_PER_POINT
    q_lower: float | None = None
    q_upper: float | None = None
    empirical: bool = True
    timing: bool = False
    truncate_ok: bool = False
    measure_id: str | None = None
    limit: int = SOLVER_LIMIT
    extra: dict = field(default_factory=dict)

    def optimizer(self):
        return OptimizerConfig(max_iters=self.max_iters, tol=self.tol, restarts=self.restarts,
                               seed=self.seed, init=self.init,
                               coarse_cells_per_point=self.coarse_cells_per_point)


def _infer_d(config: RunConfig):
    if config.d is not None:
        return config.d
    if config.grid_path:
        return int(read_json(config.grid_path)["d"])
    if config.spec_path:
        return spec_from_dict(read_json(config.spec_path)).d
    return None


def validate(config: RunConfig):
    """All problems with ``config``, as human-readable strings (empty when valid)."""
    out = []
    c = config.command
    if c not in COMMANDS:
        return [f"unknown command {c!r}"]

    def need(name, ok):
        if not ok:
            out.append(f"{c} needs --{name.replace('_', '-')}")

    source = bool(config.grid_path) or bool(config.spec_path)
    if c == "grid":
        need("spec", config.spec_path)
        need("resolution", config.resolution)
        need("output", config.output_path)
    elif c == "quantize":
        need("spec or --grid", source)
        need("n", config.n is not None)
        need("p", config.p is not None)
        need("method", config.methods)
    elif c == "error":
        need("grid or --spec", source)
        need("cloud", config.cloud_path)
        need("p", config.p is not None)
        if config.mode not in MODES:
            out.append(f"mode must be one of {MODES}")
        if config.mode == "wb" and config.omega is None:
            out.append("mode wb needs --omega-lo and --omega-hi")
        if config.spec_path and not config.grid_path:
            need("resolution", config.resolution)
    elif c == "sweep":
        need("spec", config.spec_path)
        need("n-list", config.n_list)
        need("p", config.p is not None)
        need("method", config.methods)
        need("output", config.output_path)
    elif c == "coeff":
        need("sweep", config.sweep_path)
    elif c == "report":
        need("grid or --spec", source)
        need("p", config.p is not None)
        if config.spec_path and not config.grid_path:
            need("resolution", config.resolution)

    if config.p is not None and not config.p >= 1:
        out.append("p must be >= 1")
    if config.n is not None and config.n < 1:
        out.append("n must be >= 1")
    ns = list(config.n_list)
    if any(n < 1 for n in ns):
        out.append("every n in --n-list must be >= 1")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        out.append("--n-list must be strictly increasing")
    if config.restarts < 1:
        out.append("restarts must be >= 1")
    if config.max_iters < 1:
        out.append("max-iters must be >= 1")
    if config.seed < 0:
        out.append("seed must be >= 0")
    if config.init not in INITS or config.init == "user":
        out.append(f"init must be one of {tuple(i for i in INITS if i != 'user')}")
    if config.resolution is not None and any(r < 1 for r in config.resolution):
        out.append("resolution must be >= 1")
    unknown = [m for m in config.methods if m not in METHODS]
    if unknown:
        out.append(f"unknown method(s) {unknown}; choose from {METHODS}")

    try:
        d = _infer_d(config)
    except (OSError, ValueError, KeyError, EqqError) as exc:
        out.append(f"cannot read input: {exc}")
        d = None
    if d is not None:
        if "hex_2d" in config.methods and d != 2:
            out.append(f"method hex_2d needs d = 2 (got d = {d})")
        for m in ("midpoint_1d", "chunk_1d"):
            if m in config.methods and d != 1:
                out.append(f"method {m} needs d = 1 (got d = {d})")
        if c == "error" and config.mode == "w1d" and d != 1:
            out.append(f"mode w1d needs d = 1 (got d = {d})")
        if config.omega is not None and (len(config.omega[0]) != d or len(config.omega[1]) != d):
            out.append(f"omega corners need {d} coordinates")
        if c == "report" and config.empirical and config.p is not None and config.p >= d:
            out.append(f"empirical functionals need p < d (p = {config.p}, d = {d}); pass --no-empirical")
        if config.resolution is not None and len(config.resolution) not in (1, d):
            out.append(f"resolution needs 1 or {d} entries")
    if config.omega is not None and not all(a < b for a, b in zip(*config.omega)):
        out.append("omega needs lo < hi on every axis")
    return out


def _resolution(config):
    res = config.resolution
    return None if res is None else (res[0] if len(res) == 1 else tuple(res))


def _load_grid(config: RunConfig, n=None):
    if config.grid_path:
        return read_grid(config.grid_path)
    spec = load_spec(config.spec_path)
    if config.resolution is not None:
        return build_grid(spec, _resolution(config), truncate_ok=config.truncate_ok)
    return build_grid_auto(spec, config.cells_per_point * n, truncate_ok=config.truncate_ok)


def _emit(config: RunConfig, obj):
    if config.output_path:
        write_json(config.output_path, obj)
    else:
        sys.stdout.write(dumps(obj))


def run(config: RunConfig):
    """Execute one validated command. Raises EqqError subclasses on failure."""
    c = config.command
    if c == "grid":
        grid = build_grid(load_spec(config.spec_path), _resolution(config), truncate_ok=config.truncate_ok)
        write_grid(config.output_path, grid)
    elif c == "quantize":
        grid = _load_grid(config, config.n)
        res = best_quantizer(grid, config.n, config.p, config.methods, config.optimizer(),
                             config.polish, config.region, config.theta, config.limit)
        obj = res.to_json()
        if config.output_path:
            write_cloud(config.output_path, res.cloud)
            write_json(config.output_path + ".result.json", obj)
        else:
            obj["points"] = res.cloud.to_json()["points"]
            sys.stdout.write(dumps(obj))
    elif c == "error":
        grid = _load_grid(config)
        cloud = read_cloud(config.cloud_path, total=grid.total)
        if config.mode == "capacity":
            cost = solve_uniform_capacity(grid, cloud, config.p, config.limit)[0]
        elif config.mode == "free":
            cost = nearest_assignment_cost(grid, cloud, config.p)
        elif config.mode == "w1d":
            cost = w1d_exact(grid, cloud, config.p)
        else:
            cost = wb_boundary(grid, cloud, config.omega, config.p)
        _emit(config, {"mode": config.mode, **cost_record(cost, config.p)})
    elif c == "sweep":
        asympt.sweep(load_spec(config.spec_path), config.p, config.n_list, config.methods,
                     config.optimizer(), _resolution(config), cells_per_point=config.cells_per_point,
                     truncate_ok=config.truncate_ok, measure_id=config.measure_id,
                     polish=config.polish, region=config.region, theta=config.theta,
                     limit=config.limit, timing=config.timing, out_path=config.output_path)
    elif c == "coeff":
        sw = asympt.SweepResult.read(config.sweep_path)
        method = config.methods[0] if len(config.methods) == 1 else None
        est = asympt.coefficient_estimate(sw, config.d, method)
        obj = {"measure_id": sw.measure_id, **est.to_json()}
        _emit(config, obj)
    elif c == "report":
        grid = _load_grid(config)
        rep = asympt.bound_report(grid, config.p, config.d, config.q_lower, config.q_upper, config.empirical)
        _emit(config, rep.to_json())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _methods(values):
    out = []
    for v in values or ():
        for m in v.split(","):
            m = m.strip()
            if m:
                out.append(ALIASES.get(m, m))
    return tuple(dict.fromkeys(out))


def build_parser():
    ap = argparse.ArgumentParser(prog="eqq", description="Optimal empirical quantization toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "spec" in names:
            sp.add_argument("--spec", dest="spec_path", help="measure spec JSON")
        if "grid" in names:
            sp.add_argument("--grid", dest="grid_path", help="grid density JSON")
        if "resolution" in names:
            sp.add_argument("--resolution", type=_ints, help="cells per axis (one value or one per axis)")
            sp.add_argument("--truncate-ok", action="store_true", help="allow bboxes that lose mass")
        if "p" in names:
            sp.add_argument("--p", type=float)
        if "optimizer" in names:
            sp.add_argument("--method", dest="methods", action="append",
                            help="quantizer method (repeatable or comma-separated)")
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--restarts", type=int, default=8)
            sp.add_argument("--max-iters", type=int, default=100)
            sp.add_argument("--tol", type=float, default=1e-6)
            sp.add_argument("--init", default="rho_sample")
            sp.add_argument("--polish", action="store_true", help="Lloyd-polish constructions")
            sp.add_argument("--region", default="square", choices=("square", "disk"))
            sp.add_argument("--theta", type=float, help="moment order for pierce_greedy")
            sp.add_argument("--coarse-cells-per-point", type=int,
                            help="run restarts on a coarsened grid with this many cells per point")
            sp.add_argument("--cells-per-point", type=int, default=asympt.CELLS_PER_POINT,
                            help="grid size per n when --resolution is not given")
            sp.add_argument("--limit", type=int, default=SOLVER_LIMIT, help="transport solver size limit")
        sp.add_argument("--output", dest="output_path")

    common(sub.add_parser("grid", help="discretize a measure spec"), "spec", "resolution")

    sp = sub.add_parser("quantize", help="compute a quantizer")
    common(sp, "spec", "grid", "resolution", "p", "optimizer")
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("error", help="cost of a point cloud against a grid")
    common(sp, "spec", "grid", "resolution", "p")
    sp.add_argument("--cloud", dest="cloud_path")
    sp.add_argument("--mode", default="capacity", choices=MODES)
    sp.add_argument("--omega-lo", type=_floats)
    sp.add_argument("--omega-hi", type=_floats)
    sp.add_argument("--limit", type=int, default=SOLVER_LIMIT)

    sp = sub.add_parser("sweep", help="run an n-sweep and write its CSV")
    common(sp, "spec", "resolution", "p", "optimizer")
    sp.add_argument("--n-list", type=_ints)
    sp.add_argument("--measure-id")
    sp.add_argument("--timing", action="store_true", help="record runtime_ms (breaks byte-identity)")

    sp = sub.add_parser("coeff", help="coefficient estimate from a sweep CSV")
    sp.add_argument("--sweep", dest="sweep_path")
    sp.add_argument("--d", type=int)
    sp.add_argument("--method", dest="methods", action="append")
    sp.add_argument("--output", dest="output_path")

    sp = sub.add_parser("report", help="bound functionals of a measure")
    common(sp, "spec", "grid", "resolution", "p")
    sp.add_argument("--d", type=int)
    sp.add_argument("--q-lower", type=float)
    sp.add_argument("--q-upper", type=float)
    sp.add_argument("--no-empirical", dest="empirical", action="store_false")
    return ap


def config_from_args(ns) -> RunConfig:
    kw = dict(vars(ns))
    kw["methods"] = _methods(kw.get("methods"))
    kw["n_list"] = tuple(kw.get("n_list") or ())
    lo, hi = kw.pop("omega_lo", None), kw.pop("omega_hi", None)
    if lo is not None or hi is not None:
        kw["omega"] = (tuple(lo or ()), tuple(hi or ()))
    known = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in kw.items() if k in known})


def _fail(code, detail, status):
    sys.stderr.write(json.dumps({"error": code, "detail": detail}) + "\n")
    return status


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else _fail("usage", "invalid command line", EXIT_INVALID)
    config = config_from_args(ns)
    problems = validate(config)
    if problems:
        return _fail("validation", problems, EXIT_INVALID)
    try:
        run(config)
    except (SolverError, SolverLimitExceeded) as exc:
        return _fail(exc.code, str(exc), EXIT_SOLVER)
    except EqqError as exc:
        return _fail(exc.code, str(exc), EXIT_INVALID)
    except (OSError, ValueError, KeyError) as exc:
        return _fail("input", f"{type(exc).__name__}: {exc}", EXIT_INVALID)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
