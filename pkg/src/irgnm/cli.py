"""Command-line entry point: ``irgnm {run,sweep-beta,compare} [flags]``.

Flags may also be given in a ``key=value`` file passed with ``--config``;
explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import experiments
from .errors import SolverError

_FIELDS = {f.name: f for f in dataclasses.fields(experiments.RunConfig)}


def _bool(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _coerce(name: str, value: str):
    default = _FIELDS[name].default
    kind = _FIELDS[name].type
    if value is None:
        return None
    if isinstance(default, bool):
        return _bool(value)
    if "int" in str(kind) and "float" not in str(kind):
        return int(value)
    if "float" in str(kind):
        return float(value)
    return value


def read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_").lstrip("_")
            if key == "cdec":
                key = "c_dec"
            if key not in _FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value)
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    # Defaults are None so that file values can be told apart from flags.
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--problem", choices=["potential", "darcy"])
    p.add_argument("--truth", choices=["smooth", "discontinuous", "channel"])
    p.add_argument("--method", choices=["cirgnm", "dirgnm", "hirgnm"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--cdec", dest="c_dec", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--n-obs", dest="n_obs", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--grid", type=int, help="interior nodes per direction")
    p.add_argument("--data-grid", dest="data_grid", type=int, help="grid for synthetic data (darcy)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--nu", type=float, help="Matern smoothness")
    p.add_argument("--ell", type=float, help="Matern length-scale")
    p.add_argument("--c0", type=float, help="Matern scale")
    p.add_argument("--theta", type=float, help="use the Hoelder-rate schedule with this smoothing index")
    p.add_argument("--nu-src", dest="nu_src", type=float, help="Hoelder source exponent (with --theta)")
    p.add_argument("--stop", choices=["maxiter", "discrepancy"])
    p.add_argument("--tau", type=float)
    p.add_argument("--observations", help="CSV of observations to use instead of sampling")
    p.add_argument("--save-observations", dest="save_observations", action="store_const", const=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep-beta/compare")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irgnm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run one algorithm"))
    sweep = sub.add_parser("sweep-beta", help="dIRGNM over several beta values")
    _add_common(sweep)
    sweep.add_argument("--betas", type=float, nargs="+", default=[0.6, 0.8, 1.2, 3.0])
    _add_common(sub.add_parser("compare", help="cIRGNM (noise-free/single/average) vs hIRGNM"))
    return parser


def config_from_args(args: argparse.Namespace) -> experiments.RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if args.command == "sweep-beta":
        values.setdefault("method", "dirgnm")
    return experiments.RunConfig(**values)


def _print_report(name: str, report: experiments.RunReport) -> None:
    if report.ok:
        print(f"{name}: min rel_error {report.min_error:.6g} at {report.argmin_phase} "
              f"iter {report.argmin_iter}; final {report.final_error:.6g} ({report.seconds:.1f}s)")
    else:
        print(f"{name}: FAILED {report.error}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "run":
            report = experiments.run(config)
            _print_report(config.method, report)
            if report.trajectory_csv:
                print(f"trajectory: {report.trajectory_csv}")
            return 0
        if args.command == "sweep-beta":
            reports = experiments.sweep_beta(config, args.betas, jobs=args.jobs)
            for r in reports:
                _print_report(f"beta={r.config.beta:g}", r)
            return 0 if all(r.ok for r in reports) else 1
        reports = experiments.compare(config, jobs=args.jobs)
        for name, r in reports.items():
            _print_report(name, r)
        return 0 if all(r.ok for r in reports.values()) else 1
    except (SolverError, ValueError, OSError) as exc:
        print(f"irgnm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
