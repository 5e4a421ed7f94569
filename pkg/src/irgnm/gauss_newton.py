"""Gauss-Newton steps and the classical, dynamic and hybrid IRGNM drivers.

Every step minimizes the linearized functional

    J[u] = S(F(u_n) + F'[u_n](u - u_n); W) + (alpha/2) ||u - u_anchor||^2

whose first-order condition is the normal-equation update

    u = u_n + (F'* F' + alpha)^{-1} (F'* (W - F(u_n)) + alpha (u_anchor - u_n)).

A forward model exposes ``linearize(u)`` returning an object with ``value``
(= F(u)), ``deriv(h)`` and ``adjoint(g)``; both linear maps accept a single
vector or a 2-d array of column vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np
import scipy.linalg as la

from .errors import FactorizationError, KrylovError, SolverError
from .observations import AveragedData, average_update, misfit
from .schedules import Geometric, MaxIter, should_stop

__all__ = [
    "ForwardModel",
    "Linearization",
    "GnConfig",
    "Record",
    "Trajectory",
    "conjugate_gradient",
    "gn_step_identity",
    "gn_step_covariance",
    "run_cirgnm",
    "run_dirgnm",
    "run_hirgnm",
    "relative_error",
    "TRAJECTORY_HEADER",
]

TRAJECTORY_HEADER = "iter,phase,alpha,n_obs_used,rel_error,residual_norm,misfit"


class Linearization(Protocol):
    value: np.ndarray

    def deriv(self, h: np.ndarray) -> np.ndarray: ...

    def adjoint(self, g: np.ndarray) -> np.ndarray: ...


class ForwardModel(Protocol):
    dim_param: int
    dim_obs: int

    def linearize(self, u: np.ndarray) -> Linearization: ...

    def apply(self, u: np.ndarray) -> np.ndarray: ...

    def deriv(self, u: np.ndarray, h: np.ndarray) -> np.ndarray: ...

    def adjoint(self, u: np.ndarray, g: np.ndarray) -> np.ndarray: ...

    def inner_obs(self, a: np.ndarray, b: np.ndarray) -> float: ...

    def inner_param(self, a: np.ndarray, b: np.ndarray) -> float: ...


def conjugate_gradient(apply, b, inner, tol=1e-10, max_iter=5000):
    """Solve the self-adjoint positive definite system ``apply(x) = b``.

    Convergence is measured as ``||b - apply(x)|| <= tol * ||b||`` in the
    norm induced by ``inner``. Returns ``(x, iterations)``.
    """
    x = np.zeros_like(b)
    b_norm = math.sqrt(inner(b, b))
    if b_norm == 0.0:
        return x, 0
    r = b.copy()
    p = r.copy()
    rr = inner(r, r)
    target = (tol * b_norm) ** 2
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            raise KrylovError(
                "operator is not positive definite along the search direction",
                residual=math.sqrt(rr) / b_norm,
                iterations=it,
            )
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = inner(r, r)
        if rr_new <= target:
            return x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise KrylovError(
        f"CG did not reach relative residual {tol:g} in {max_iter} iterations "
        f"(achieved {math.sqrt(rr) / b_norm:.3e})",
        residual=math.sqrt(rr) / b_norm,
        iterations=max_iter,
    )


def gn_step_identity(model, u_n, u_anchor, w, alpha, *, lin=None, tol=1e-10, max_iter=5000):
    """Gauss-Newton step with an ``L2`` penalty, solved matrix-free by CG."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    lin = model.linearize(u_n) if lin is None else lin
    rhs = lin.adjoint(w - lin.value) + alpha * (u_anchor - u_n)

    def normal_op(d):
        return lin.adjoint(lin.deriv(d)) + alpha * d

    d, _ = conjugate_gradient(normal_op, rhs, model.inner_param, tol, max_iter)
    return u_n + d


def gn_step_covariance(model, u_n, u_anchor, w, alpha, cov, *, lin=None):
    """Gauss-Newton step with a covariance-weighted penalty.

    Uses the observation-space form
    ``u_anchor + C J* (J C J* + alpha I)^{-1} (w - F(u_n) - J (u_anchor - u_n))``,
    which only needs a dense ``dim_obs x dim_obs`` Cholesky factorization.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    lin = model.linearize(u_n) if lin is None else lin
    bracket = w - lin.value - lin.deriv(u_anchor - u_n)
    if not np.any(bracket):
        return np.array(u_anchor, dtype=float, copy=True)
    jstar = lin.adjoint(np.eye(model.dim_obs))
    c_jstar = cov.apply(jstar)
    gram = lin.deriv(c_jstar)
    gram = 0.5 * (gram + gram.T)
    gram[np.diag_indices_from(gram)] += alpha
    try:
        factor = la.cho_factor(gram, lower=True)
    except la.LinAlgError as exc:
        raise FactorizationError(
            f"observation-space system lost positive definiteness (alpha={alpha:g}): {exc}"
        ) from exc
    return u_anchor + c_jstar @ la.cho_solve(factor, bracket)


def relative_error(u, u_true, inner=np.dot) -> float:
    """``||u - u_true|| / ||u_true||`` in the norm induced by ``inner``."""
    u = np.asarray(u, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    if u.shape != u_true.shape:
        raise ValueError(f"grid mismatch: {u.shape} vs {u_true.shape}")
    denom = inner(u_true, u_true)
    if denom == 0:
        raise ValueError("relative error undefined for a zero reference field")
    diff = u - u_true
    return math.sqrt(inner(diff, diff) / denom)


@dataclass
class GnConfig:
    """Settings shared by the three drivers.

    ``method`` selects the step: ``"cg"`` (identity prior, matrix-free),
    ``"woodbury"`` (covariance prior, requires ``prior``), ``"kkt"`` (the
    model's own block solver) or ``"auto"`` (woodbury if a prior is set,
    else kkt when the model offers it, else cg).
    """

    u0: np.ndarray
    schedule: Callable[[int], float]
    stop: object = None
    prior: object = None
    linear_solver_tol: float = 1e-10
    linear_solver_max_iter: int = 5000
    method: str = "auto"

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        if not (self.linear_solver_tol > 0 and self.linear_solver_max_iter > 0):
            raise ValueError("linear solver tolerances must be positive")
        if self.method not in ("auto", "cg", "woodbury", "kkt"):
            raise ValueError(f"unknown step method {self.method!r}")
        if self.method == "woodbury" and self.prior is None:
            raise ValueError("woodbury step needs a prior covariance")

    def replace(self, **changes) -> "GnConfig":
        fields = dict(self.__dict__)
        fields.update(changes)
        return GnConfig(**fields)


def _step(model, config: GnConfig, u_n, w, alpha, lin):
    method = config.method
    if method == "auto":
        if config.prior is not None:
            method = "woodbury"
        elif hasattr(model, "kkt_step"):
            method = "kkt"
        else:
            method = "cg"
    if method == "woodbury":
        return gn_step_covariance(model, u_n, config.u0, w, alpha, config.prior, lin=lin)
    if method == "kkt":
        return model.kkt_step(u_n, config.u0, w, alpha, lin=lin)
    return gn_step_identity(
        model,
        u_n,
        config.u0,
        w,
        alpha,
        lin=lin,
        tol=config.linear_solver_tol,
        max_iter=config.linear_solver_max_iter,
    )


@dataclass(frozen=True)
class Record:
    n: int
    alpha: float
    rel_error: float
    residual_norm: float
    misfit: float
    phase: str
    n_obs_used: int


@dataclass
class Trajectory:
    """Iteration history of one run.

    ``best_estimate`` is the iterate with the smallest relative error (only
    tracked when a truth is known).
    """

    records: list = field(default_factory=list)
    final_estimate: np.ndarray | None = None
    final_alpha: float | None = None
    initial_error: float = math.nan
    best_estimate: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def errors(self, phase: str | None = None) -> np.ndarray:
        return np.array([r.rel_error for r in self.records if phase in (None, r.phase)])

    def phase(self, name: str) -> list:
        return [r for r in self.records if r.phase == name]

    def argmin(self, phase: str | None = None) -> Record:
        recs = [r for r in self.records if phase in (None, r.phase)]
        if not recs:
            raise ValueError("empty trajectory")
        return min(recs, key=lambda r: r.rel_error)

    def min_error(self, phase: str | None = None) -> float:
        return self.argmin(phase).rel_error

    def extend(self, other: "Trajectory") -> None:
        self.records.extend(other.records)
        self.final_estimate = other.final_estimate
        self.final_alpha = other.final_alpha
        if other.best_estimate is not None and (
            self.best_estimate is None or other.min_error() < self.min_error()
        ):
            self.best_estimate = other.best_estimate

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            fh.write(TRAJECTORY_HEADER + "\n")
            for r in self.records:
                fh.write(
                    f"{r.n},{r.phase},{r.alpha:.17g},{r.n_obs_used},"
                    f"{r.rel_error:.17g},{r.residual_norm:.17g},{r.misfit:.17g}\n"
                )


class _Recorder:
    def __init__(self, model, u_true, trajectory):
        self.model = model
        self.u_true = u_true
        self.traj = trajectory
        self._best = math.inf

    def error(self, u):
        if self.u_true is None:
            return math.nan
        return relative_error(u, self.u_true, self.model.inner_param)

    def record(self, n, alpha, u, lin, w, phase, n_obs):
        resid = lin.value - w
        rec = Record(
            n=n,
            alpha=alpha,
            rel_error=self.error(u),
            residual_norm=math.sqrt(self.model.inner_obs(resid, resid)),
            misfit=misfit(lin.value, w, self.model.inner_obs),
            phase=phase,
            n_obs_used=n_obs,
        )
        self.traj.records.append(rec)
        if rec.rel_error < self._best:
            self._best = rec.rel_error
            self.traj.best_estimate = u.copy()
        return rec


def run_cirgnm(model, config: GnConfig, u_start, w, m: int, *, u_true=None,
               n_obs_used: int = 1, phase: str = "classic") -> Trajectory:
    """Classical IRGNM with fixed data ``w`` for at most ``m`` iterations.

    The penalty anchor stays at ``config.u0`` while the iteration starts at
    ``u_start``; iteration ``n`` uses ``config.schedule(n)``.
    """
    u = np.array(u_start, dtype=float, copy=True)
    w = np.asarray(w, dtype=float)
    traj = Trajectory(final_estimate=u.copy())
    rec = _Recorder(model, u_true, traj)
    traj.initial_error = rec.error(u)
    if m <= 0:
        return traj
    limit = m
    if isinstance(config.stop, MaxIter):
        limit = min(m, config.stop.m)
    lin = model.linearize(u)
    for n in range(1, limit + 1):
        alpha = config.schedule(n)
        try:
            u = _step(model, config, u, w, alpha, lin)
            lin = model.linearize(u)
        except SolverError as exc:
            exc.trajectory = traj
            raise
        r = rec.record(n, alpha, u, lin, w, phase, n_obs_used)
        traj.final_estimate = u.copy()
        traj.final_alpha = alpha
        if should_stop(config.stop, n, r.residual_norm):
            break
    return traj


def _observation_source(stream):
    if hasattr(stream, "observe"):
        return stream.observe
    if isinstance(stream, np.ndarray) or isinstance(stream, Sequence):
        return lambda n: np.asarray(stream[n - 1], dtype=float)
    it = iter(stream)
    return lambda n: np.asarray(next(it), dtype=float)


def run_dirgnm(model, config: GnConfig, stream, n_obs: int, *, u_true=None,
               return_average: bool = False):
    """Dynamic IRGNM: one step per incoming observation against the running mean.

    ``stream`` is an ``ObservationStream``, a sequence of observations, or an
    iterator. Returns the trajectory (and the final ``AveragedData`` when
    ``return_average`` is set).
    """
    if n_obs < 1:
        raise ValueError("dynamic IRGNM needs at least one observation")
    observe = _observation_source(stream)
    u = np.array(config.u0, dtype=float, copy=True)
    traj = Trajectory(final_estimate=u.copy())
    rec = _Recorder(model, u_true, traj)
    traj.initial_error = rec.error(u)
    z = AveragedData.empty(model.dim_obs)
    lin = model.linearize(u)
    for n in range(1, n_obs + 1):
        z = average_update(z, observe(n))
        alpha = config.schedule(n)
        try:
            u = _step(model, config, u, z.mean, alpha, lin)
            lin = model.linearize(u)
        except SolverError as exc:
            exc.trajectory = traj
            raise
        rec.record(n, alpha, u, lin, z.mean, "dynamic", n)
        traj.final_estimate = u.copy()
        traj.final_alpha = alpha
    if return_average:
        return traj, z
    return traj


def run_hirgnm(model, config: GnConfig, stream, n_obs: int, m: int, *,
               c_dec: float = 1.5, u_true=None) -> Trajectory:
    """Hybrid IRGNM: dynamic phase over ``n_obs`` observations, then ``m``
    classical steps on their mean with ``alpha_N * c_dec**(-n)``."""
    traj, z = run_dirgnm(model, config, stream, n_obs, u_true=u_true, return_average=True)
    if m <= 0:
        return traj
    classic = config.replace(schedule=Geometric(traj.final_alpha, c_dec))
    try:
        tail = run_cirgnm(model, classic, traj.final_estimate, z.mean, m,
                          u_true=u_true, n_obs_used=n_obs, phase="classic")
    except SolverError as exc:
        if exc.trajectory is not None:
            traj.extend(exc.trajectory)
        exc.trajectory = traj
        raise
    traj.extend(tail)
    return traj
