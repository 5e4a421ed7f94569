"""Experiment harness: build a benchmark, stream data, run a driver, write CSVs."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import assemble_covariance, sample_prior
from .darcy import DarcyProblem
from .errors import SolverError
from .gauss_newton import GnConfig, Trajectory, run_cirgnm, run_dirgnm, run_hirgnm
from .grid import save_field_csv
from .observations import NoiseConfig, ObservationStream, load_observations_csv, save_observations_csv
from .potential import PotentialProblem
from .schedules import Discrepancy, Geometric, HolderRate, MaxIter, Power, noise_norm_estimate

log = logging.getLogger(__name__)

__all__ = ["RunConfig", "RunReport", "Experiment", "build", "run", "sweep_beta", "compare"]

PROBLEM_DEFAULTS = {
    "potential": {"sigma": 5e-4, "grid": 33, "data_grid": None},
    "darcy": {"sigma": 2e-3, "grid": 65, "data_grid": 129},
}


@dataclass(frozen=True)
class RunConfig:
    problem: str = "potential"
    truth: str = "smooth"
    method: str = "cirgnm"
    sigma: float | None = None
    alpha0: float = 1e-3
    c_dec: float = 1.5
    beta: float = 1.2
    n_obs: int = 1
    max_iter: int = 15
    grid: int | None = None
    data_grid: int | None = None
    seed: int = 0
    out: str | None = None
    nu: float = 3.0
    ell: float = 0.08
    c0: float = 1.0
    theta: float | None = None
    nu_src: float = 0.0
    stop: str = "maxiter"
    tau: float = 1.5
    observations: str | None = None
    save_observations: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEM_DEFAULTS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.truth not in ("smooth", "discontinuous", "channel"):
            raise ValueError(f"unknown truth {self.truth!r}")
        if self.method not in ("cirgnm", "dirgnm", "hirgnm"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("dirgnm", "hirgnm") and self.n_obs < 1:
            raise ValueError("the dynamic phase needs at least one observation (n_obs >= 1)")
        if self.n_obs < 1:
            raise ValueError("n_obs must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.stop not in ("maxiter", "discrepancy"):
            raise ValueError(f"unknown stop rule {self.stop!r}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def resolved(self, name: str):
        value = getattr(self, name)
        return PROBLEM_DEFAULTS[self.problem][name] if value is None else value

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunReport:
    config: RunConfig
    min_error: float = math.nan
    argmin_iter: int | None = None
    argmin_phase: str | None = None
    final_error: float = math.nan
    seconds: float = 0.0
    trajectory_csv: str | None = None
    final_csv: str | None = None
    best_csv: str | None = None
    error: str | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Experiment:
    """A configured problem with its data stream and driver settings."""

    config: RunConfig
    problem: object
    stream: object
    gn: GnConfig

    @property
    def u_true(self):
        return self.problem.u_true


class _ArrayStream:
    def __init__(self, observations):
        self.observations = np.asarray(observations, dtype=float)

    def observe(self, n):
        if not 1 <= n <= len(self.observations):
            raise IndexError(f"observation {n} not available (have {len(self.observations)})")
        return self.observations[n - 1]

    def average(self, count):
        return _Mean(self.observations[:count].mean(axis=0))

    def take(self, count):
        return self.observations[:count]


@dataclass
class _Mean:
    mean: np.ndarray


def build(config: RunConfig) -> Experiment:
    """Problem, observation stream and Gauss-Newton settings for ``config``."""
    grid = config.resolved("grid")
    sigma = config.resolved("sigma")
    prior = None
    if config.problem == "potential":
        problem = PotentialProblem(grid, config.truth if config.truth != "channel" else "discontinuous")
        y_true = problem.exact_data()
        u0 = np.zeros(problem.dim_param)
        obs_weight = problem.grid.h**2
    else:
        problem = DarcyProblem(grid, config.truth)
        y_true = problem.synthetic_data(config.resolved("data_grid"))
        prior = assemble_covariance(problem.grid, config.c0, config.nu, config.ell)
        if problem.truth == "smooth":
            u0 = np.ones(problem.dim_param)
        else:
            u0 = sample_prior(prior, config.seed)
        obs_weight = 1.0

    if config.observations:
        stream = _ArrayStream(load_observations_csv(config.observations))
    else:
        stream = ObservationStream(y_true, NoiseConfig(sigma, config.seed))

    stop = None
    if config.stop == "discrepancy":
        est = noise_norm_estimate(sigma, problem.dim_obs, config.n_obs, obs_weight)
        stop = Discrepancy(config.tau, est)
    elif config.max_iter > 0:
        stop = MaxIter(config.max_iter)

    if config.method == "cirgnm":
        schedule = Geometric(config.alpha0, config.c_dec)
    elif config.theta is not None:
        schedule = HolderRate(config.alpha0, config.nu_src, config.theta)
    else:
        schedule = Power(config.alpha0, config.beta)
    gn = GnConfig(u0=u0, schedule=schedule, stop=stop, prior=prior)
    return Experiment(config, problem, stream, gn)


def _data_for_classic(exp: Experiment) -> np.ndarray:
    n = exp.config.n_obs
    if n == 1:
        return exp.stream.observe(1)
    return exp.stream.average(n).mean


def execute(exp: Experiment) -> Trajectory:
    cfg = exp.config
    if cfg.method == "cirgnm":
        return run_cirgnm(exp.problem, exp.gn, exp.gn.u0, _data_for_classic(exp), cfg.max_iter,
                          u_true=exp.u_true, n_obs_used=cfg.n_obs)
    if cfg.method == "dirgnm":
        return run_dirgnm(exp.problem, exp.gn, exp.stream, cfg.n_obs, u_true=exp.u_true)
    return run_hirgnm(exp.problem, exp.gn, exp.stream, cfg.n_obs, cfg.max_iter,
                      c_dec=cfg.c_dec, u_true=exp.u_true)


def _write_outputs(report: RunReport, exp: Experiment, traj: Trajectory) -> None:
    out = Path(report.config.out)
    out.mkdir(parents=True, exist_ok=True)
    report.trajectory_csv = str(out / "trajectory.csv")
    traj.to_csv(report.trajectory_csv)
    grid = exp.problem.grid
    if traj.final_estimate is not None:
        report.final_csv = str(out / "final.csv")
        save_field_csv(report.final_csv, traj.final_estimate, grid)
    if traj.best_estimate is not None:
        report.best_csv = str(out / "best.csv")
        save_field_csv(report.best_csv, traj.best_estimate, grid)
    save_field_csv(out / "truth.csv", exp.u_true, grid)
    if report.config.save_observations and isinstance(exp.stream, ObservationStream):
        save_observations_csv(out / "observations.csv", exp.stream.take(report.config.n_obs))


def _summarize(report: RunReport, traj: Trajectory) -> None:
    report.trajectory = traj
    if len(traj):
        best = traj.argmin()
        report.min_error = best.rel_error
        report.argmin_iter = best.n
        report.argmin_phase = best.phase
        report.final_error = traj.records[-1].rel_error


def run(config: RunConfig, experiment: Experiment | None = None) -> RunReport:
    """Run one configured experiment and write its CSV outputs.

    Solver failures propagate after the partial trajectory has been written.
    """
    start = time.perf_counter()
    exp = build(config) if experiment is None else experiment
    report = RunReport(config)
    try:
        traj = execute(exp)
    except SolverError as exc:
        report.error = str(exc)
        if exc.trajectory is not None:
            _summarize(report, exc.trajectory)
            if config.out:
                _write_outputs(report, exp, exc.trajectory)
        raise
    _summarize(report, traj)
    report.seconds = time.perf_counter() - start
    if config.out:
        _write_outputs(report, exp, traj)
    log.info("%s/%s/%s: min error %.4g at %s", config.problem, config.truth, config.method,
             report.min_error, report.argmin_iter)
    return report


def _run_safely(config: RunConfig) -> RunReport:
    try:
        return run(config)
    except (SolverError, ValueError) as exc:
        return RunReport(config, error=f"{type(exc).__name__}: {exc}")


def _map(configs, jobs):
    if jobs and jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_safely, configs))
        for r in reports:
            r.trajectory = None
        return reports
    return [_run_safely(c) for c in configs]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def sweep_beta(config: RunConfig, betas, jobs: int = 1) -> list[RunReport]:
    """dIRGNM once per ``beta`` on the same observation stream."""
    if config.method != "dirgnm":
        raise ValueError("beta sweeps run the dynamic method (method='dirgnm')")
    configs = []
    for beta in betas:
        out = str(Path(config.out) / f"beta_{beta:g}") if config.out else None
        configs.append(config.replace(beta=float(beta), out=out))
    reports = _map(configs, jobs)
    if config.out:
        Path(config.out).mkdir(parents=True, exist_ok=True)
        with open(Path(config.out) / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["beta", "min_error", "final_error", "argmin_iter", "status"])
            for r in reports:
                writer.writerow([_fmt(r.config.beta), _fmt(r.min_error), _fmt(r.final_error),
                                 _fmt(r.argmin_iter), "ok" if r.ok else r.error])
    return reports


COMPARE_VARIANTS = ("cirgnm_noise_free", "cirgnm_single", "cirgnm_average", "hirgnm")


def compare(config: RunConfig, jobs: int = 1) -> dict[str, RunReport]:
    """cIRGNM on noise-free, single and averaged data next to hIRGNM, all on one seed.

    ``config.n_obs`` is the number of averaged observations and
    ``config.max_iter`` the classical iteration count of every variant.
    """
    base = config.replace(stop="maxiter")

    def sub(name):
        return str(Path(config.out) / name) if config.out else None

    configs = {
        "cirgnm_noise_free": base.replace(method="cirgnm", sigma=0.0, n_obs=1, out=sub("cirgnm_noise_free")),
        "cirgnm_single": base.replace(method="cirgnm", n_obs=1, out=sub("cirgnm_single")),
        "cirgnm_average": base.replace(method="cirgnm", out=sub("cirgnm_average")),
        "hirgnm": base.replace(method="hirgnm", out=sub("hirgnm")),
    }
    reports = dict(zip(configs, _map(list(configs.values()), jobs)))
    if config.out:
        Path(config.out).mkdir(parents=True, exist_ok=True)
        with open(Path(config.out) / "compare.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["variant", "min_error", "argmin_iter", "argmin_phase",
                             "classic_min_error", "classic_argmin_iter", "status"])
            for name, r in reports.items():
                cmin, carg = _classic_stats(r)
                writer.writerow([name, _fmt(r.min_error), _fmt(r.argmin_iter), _fmt(r.argmin_phase),
                                 _fmt(cmin), _fmt(carg), "ok" if r.ok else r.error])
    return reports


def _classic_stats(report: RunReport):
    traj = report.trajectory
    if traj is not None and traj.phase("classic"):
        best = traj.argmin("classic")
        return best.rel_error, best.n
    if report.trajectory_csv:
        with open(report.trajectory_csv) as fh:
            rows = [r for r in csv.DictReader(fh) if r["phase"] == "classic"]
        if rows:
            best = min(rows, key=lambda r: float(r["rel_error"]))
            return float(best["rel_error"]), int(best["iter"])
    return None, None
