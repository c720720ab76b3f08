"""Command-line entry point: ``robinmc <subcommand> [--config PATH] [--seed U64] ...``.

Exit codes: 0 success, 1 a check failed or an estimator error, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import tomli_w

from . import experiments, fd_oracle
from .config import RunConfig, load_config
from .errors import ConfigError, ContractViolation
from .feynman_kac import estimate_dirichlet, estimate_robin

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


class Run:
    """Resolved config plus CLI overrides."""

    def __init__(self, args):
        self.cfg: RunConfig = load_config(args.config)
        seed = args.seed if args.seed is not None else self.cfg.seed
        if seed is None:
            raise ConfigError("no seed: pass --seed or set mc.seed", key="mc.seed")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="--seed")
        self.seed = int(seed)
        self.workers = args.workers if args.workers is not None else self.cfg.workers
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1", key="--workers")
        out = args.out if args.out is not None else self.cfg.out_dir
        self.out = Path(out) if out is not None else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def emit(self, name: str, obj):
        print(json.dumps(obj, sort_keys=True, default=_jsonable))
        if self.out is not None:
            write_json(self.out / name, obj)


def _point_arg(text, key):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers", key=key) from None


def cmd_solve_robin(args) -> int:
    run = Run(args)
    cfg = run.cfg
    x = _point_arg(args.x, "--x") if args.x else cfg.x
    n = args.n if args.n is not None else cfg.n
    if x is None:
        raise ConfigError("missing evaluation point: pass --x or set x", key="x")
    if n is None or not n > 0:
        raise ConfigError(f"penalty n must be > 0, got {n}", key="n")
    problem = cfg.problem(n)
    est = estimate_robin(problem, x, n, cfg.sim, cfg.paths, run.seed, run.workers)
    out = est.to_dict()
    out.update({"x": x.tolist(), "n": n})
    run.emit("robin.json", out)
    return EXIT_OK


def cmd_solve_dirichlet(args) -> int:
    run = Run(args)
    cfg = run.cfg
    x = _point_arg(args.x, "--x") if args.x else cfg.x
    if x is None:
        raise ConfigError("missing evaluation point: pass --x or set x", key="x")
    est = estimate_dirichlet(cfg.problem(), x, cfg.sim, cfg.paths, run.seed, run.workers)
    out = est.to_dict()
    out["x"] = x.tolist()
    run.emit("dirichlet.json", out)
    return EXIT_OK


def cmd_converge(args) -> int:
    run = Run(args)
    cfg = run.cfg
    if not cfg.points:
        raise ConfigError("missing key points", key="points")
    if not cfg.n_schedule:
        raise ConfigError("missing key n_schedule", key="n_schedule")
    try:
        problem = cfg.problem()
    except ConfigError as exc:
        raise ConfigError(f"{exc} (convergence runs use one fixed g for every n)", key=exc.key) from exc
    rep = experiments.run_convergence(problem, cfg.points, cfg.n_schedule, cfg.sim, cfg.paths, run.seed,
                                      run.workers, cfg.dirichlet_paths)
    meta = dict(rep.metadata)
    meta.update({"problem": rep.problem, "points": [p.tolist() for p in rep.points], "n_schedule": rep.n_schedule,
                 "nonincreasing": [rep.nonincreasing(i) for i in range(len(rep.points))]})
    if run.out is not None:
        write_csv(run.out / "convergence.csv", rep.header(), rep.table())
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(rep.header())
        for row in rep.table():
            w.writerow([fmt(v) for v in row])
    if run.out is not None:
        write_json(run.out / "convergence.json", meta)
    return EXIT_OK


def cmd_validate(args) -> int:
    run = Run(args)
    v = run.cfg.validation
    rep = experiments.run_validation(run.cfg.sim, run.seed, paths=v.get("paths", 2000),
                                     kappa_paths=v.get("kappa_paths", 2000), workers=run.workers,
                                     resolution=v.get("resolution", 33))
    run.emit("validation.json", rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_calibrate(args) -> int:
    run = Run(args)
    cfg = run.cfg
    c = cfg.calibration
    res = experiments.calibrate_local_time(
        experiments.calibration_problem(), cfg.sim, c.get("paths", 20_000), run.seed, point=c.get("point"),
        resolution=c.get("resolution", 65), bracket=c.get("bracket", (0.5, 8.0)), workers=run.workers,
    )
    out = res.to_dict()
    out["passed"] = res.halfwidth <= 0.02
    run.emit("calibration.json", out)
    if run.out is not None:
        raw = copy.deepcopy(cfg.raw)
        raw.setdefault("sim", {})["kappa"] = res.kappa
        with open(run.out / "calibrated.toml", "wb") as fh:
            tomli_w.dump(raw, fh)
    return EXIT_OK if out["passed"] else EXIT_FAIL


def cmd_oracle(args) -> int:
    run = Run(args)
    cfg = run.cfg
    o = cfg.oracle
    solver = o.get("solver", "dirichlet")
    res = o.get("resolution", fd_oracle.DEFAULT_RESOLUTION)
    pre = bool(o.get("precondition", False))
    if solver == "robin":
        n = o.get("n", cfg.n)
        if n is None:
            raise ConfigError("oracle.n is required for the robin solver", key="oracle.n")
        gf = fd_oracle.solve_robin_fd(cfg.problem(n), n, res, precondition=pre)
    elif solver == "neumann":
        gf = fd_oracle.solve_neumann_flux_fd(cfg.problem(o.get("n", cfg.n)), res, precondition=pre)
    else:
        gf = fd_oracle.solve_dirichlet_fd(cfg.problem(o.get("n", cfg.n)), res, precondition=pre)
    d = gf.box.dimension
    header = {"box": gf.box.to_config(), "resolution": gf.resolution, "residual": gf.residual,
              "iterations": gf.iterations, "solver": solver}
    rows = ([*ijk, *x, v] for ijk, x, v in gf.rows())
    names = [f"i{k}" for k in range(d)] + [f"x{k}" for k in range(d)] + ["value"]
    if run.out is not None:
        write_csv(run.out / "oracle.csv", names, rows)
        write_json(run.out / "oracle.json", header)
    print(json.dumps(header, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "solve-robin": cmd_solve_robin,
    "solve-dirichlet": cmd_solve_dirichlet,
    "converge": cmd_converge,
    "validate": cmd_validate,
    "calibrate": cmd_calibrate,
    "oracle": cmd_oracle,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = _Parser(prog="robinmc", description="Monte Carlo Robin / Dirichlet solver")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML run configuration (built-in default if omitted)")
        s.add_argument("--seed", type=_u64, help="master seed, overrides mc.seed")
        s.add_argument("--workers", type=int, help="worker processes, overrides mc.workers")
        s.add_argument("--out", help="output directory")
        if name in ("solve-robin", "solve-dirichlet"):
            s.add_argument("--x", help="evaluation point, comma separated")
        if name == "solve-robin":
            s.add_argument("--n", type=float, help="penalty n > 0")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractViolation as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
