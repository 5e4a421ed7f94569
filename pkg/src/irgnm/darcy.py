"""Log-permeability identification for ``-div(exp(u) grad p) = f``, ``p = 0`` on the boundary.

Cell-centred five-point finite differences on interior nodes. The face
transmissibility between two interior nodes is the arithmetic mean of their
``exp(u)``; a face touching the boundary uses the adjacent interior node's
value. Pressures are observed at ``K`` points snapped to the nearest grid
node, and derivatives are those of the discrete map (discretize, then
differentiate), so ``deriv``/``adjoint`` are an exact adjoint pair.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import PDESolveError
from .grid import Grid
from .potential import smooth_truth

__all__ = [
    "DarcyProblem",
    "DarcyLinearization",
    "channel_truth",
    "smooth_truth",
    "darcy_truth_field",
    "observation_lattice",
    "Transmissibility",
]

# Channel fixture: a band of half-width 0.1 around a fixed two-mode sinusoid.
_CHANNEL_HIGH = 2.0
_CHANNEL_HALF_WIDTH = 0.1


def channel_truth(x, y):
    """Piecewise-constant channel field with values in ``{0, 2}``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    centre = (
        0.5
        + 0.2 * np.sin(2 * np.pi * (0.9 * x + 0.1))
        + 0.05 * np.sin(2 * np.pi * (2.3 * x + 0.35))
    )
    return np.where(np.abs(y - centre) < _CHANNEL_HALF_WIDTH, _CHANNEL_HIGH, 0.0)


_TRUTHS = {"smooth": smooth_truth, "channel": channel_truth, "discontinuous": channel_truth}


def darcy_truth_field(kind: str, grid: Grid) -> np.ndarray:
    try:
        func = _TRUTHS[kind]
    except KeyError:
        raise ValueError(f"unknown truth {kind!r}; choose from {sorted(_TRUTHS)}") from None
    return grid.evaluate(func)


def observation_lattice(k: int = 14) -> np.ndarray:
    """``k x k`` regular lattice of points strictly inside the unit square."""
    a = np.arange(1, k + 1) / (k + 1)
    X, Y = np.meshgrid(a, a, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


class Transmissibility:
    """Face coefficients built from nodal ``exp(u)``."""

    def __init__(self, u: np.ndarray, grid: Grid):
        n = grid.n
        with np.errstate(over="ignore"):
            e = np.exp(np.asarray(u, dtype=float)).reshape(n, n)
        if not np.all(np.isfinite(e)) or not np.all(e > 0):
            raise PDESolveError("non-positive or overflowing transmissibility (check exp(u))")
        self.nodal = e
        self.horizontal = 0.5 * (e[:, :-1] + e[:, 1:])
        self.vertical = 0.5 * (e[:-1, :] + e[1:, :])
        self.boundary = np.zeros((n, n))
        self.boundary[:, 0] += e[:, 0]
        self.boundary[:, -1] += e[:, -1]
        self.boundary[0, :] += e[0, :]
        self.boundary[-1, :] += e[-1, :]


class DarcyLinearization:
    def __init__(self, problem: "DarcyProblem", u: np.ndarray):
        self.problem = problem
        self.u = u
        self.trans = Transmissibility(u, problem.grid)
        self.matrix = problem._assemble(self.trans)
        try:
            self.lu = spla.splu(self.matrix.tocsc())
        except RuntimeError as exc:
            raise PDESolveError(f"singular Darcy system: {exc}") from exc
        self.state = self.lu.solve(problem.source)
        self.sensitivity = problem._sensitivity(self.trans, self.state)
        self.value = self.state[problem.obs_index]

    def deriv(self, h):
        h = np.asarray(h, dtype=float)
        return -self.lu.solve(self.sensitivity @ h)[self.problem.obs_index]

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        pr = self.problem
        lifted = np.zeros((pr.dim_param,) + g.shape[1:])
        np.add.at(lifted, pr.obs_index, g)
        lam = self.lu.solve(lifted, trans="T")
        # Riesz representer with respect to the h^2-weighted parameter inner product.
        return -(self.sensitivity.T @ lam) / pr.grid.h**2


class DarcyProblem:
    """Forward map ``u -> (p(x_1), ..., p(x_K))``.

    Parameters
    ----------
    grid : Grid or int
        Inversion grid.
    truth : {"smooth", "channel"}
        Log-permeability used for synthetic data; ``"discontinuous"`` is an
        alias of ``"channel"``.
    f : float
        Constant source term.
    obs_points : (K, 2) array, optional
        Defaults to the 14 x 14 lattice.
    """

    def __init__(self, grid, truth: str = "smooth", f: float = 1.0, obs_points=None):
        self.grid = grid if isinstance(grid, Grid) else Grid(int(grid))
        self.truth = "channel" if truth == "discontinuous" else truth
        self.u_true = darcy_truth_field(self.truth, self.grid)
        self.f = float(f)
        self.source = np.full(self.grid.size, self.f)
        pts = observation_lattice() if obs_points is None else np.asarray(obs_points, dtype=float)
        if np.any((pts <= 0) | (pts >= 1)):
            raise ValueError("observation points must lie strictly inside the unit square")
        self.obs_points = pts
        n, h = self.grid.n, self.grid.h
        idx = np.clip(np.rint(pts / h).astype(int) - 1, 0, n - 1)
        self.obs_index = idx[:, 1] * n + idx[:, 0]
        self.dim_param = self.grid.size
        self.dim_obs = len(pts)
        self._build_topology()

    def _build_topology(self):
        n = self.grid.n
        ids = np.arange(n * n).reshape(n, n)
        self._h_left, self._h_right = ids[:, :-1].ravel(), ids[:, 1:].ravel()
        self._v_low, self._v_high = ids[:-1, :].ravel(), ids[1:, :].ravel()

    def _assemble(self, trans: Transmissibility) -> sp.csr_matrix:
        th = trans.horizontal.ravel()
        tv = trans.vertical.ravel()
        diag = trans.boundary.ravel().copy()
        np.add.at(diag, self._h_left, th)
        np.add.at(diag, self._h_right, th)
        np.add.at(diag, self._v_low, tv)
        np.add.at(diag, self._v_high, tv)
        rows = np.concatenate([np.arange(diag.size), self._h_left, self._h_right, self._v_low, self._v_high])
        cols = np.concatenate([np.arange(diag.size), self._h_right, self._h_left, self._v_high, self._v_low])
        vals = np.concatenate([diag, -th, -th, -tv, -tv])
        size = self.grid.size
        return sp.csr_matrix((vals, (rows, cols)), shape=(size, size)) / self.grid.h**2

    def _sensitivity(self, trans: Transmissibility, p: np.ndarray) -> sp.csr_matrix:
        """Jacobian of ``A(u) p`` with respect to ``u`` for fixed ``p``."""
        e = trans.nodal.ravel()
        rows, cols, vals = [np.arange(e.size)], [np.arange(e.size)], [trans.boundary.ravel() * p]
        for a, b in ((self._h_left, self._h_right), (self._v_low, self._v_high)):
            dp = p[a] - p[b]
            # row a carries T (p_a - p_b), row b carries T (p_b - p_a); dT/du_k = e_k / 2
            rows += [a, a, b, b]
            cols += [a, b, a, b]
            vals += [0.5 * e[a] * dp, 0.5 * e[b] * dp, -0.5 * e[a] * dp, -0.5 * e[b] * dp]
        size = self.grid.size
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )
        return mat / self.grid.h**2

    def solve_darcy(self, u, f=None) -> np.ndarray:
        lin_source = self.source if f is None else np.broadcast_to(np.asarray(f, dtype=float), (self.grid.size,))
        trans = Transmissibility(u, self.grid)
        try:
            return spla.spsolve(self._assemble(trans).tocsc(), lin_source)
        except RuntimeError as exc:
            raise PDESolveError(f"singular Darcy system: {exc}") from exc

    def point_values(self, p: np.ndarray, points=None) -> np.ndarray:
        """Bilinear interpolation of a state (zero on the boundary) at ``points``."""
        pts = self.obs_points if points is None else points
        n = self.grid.n
        padded = np.zeros((n + 2, n + 2))
        padded[1:-1, 1:-1] = np.asarray(p).reshape(n, n)
        axis = np.linspace(0.0, 1.0, n + 2)
        interp = RegularGridInterpolator((axis, axis), padded)
        return interp(pts[:, ::-1])

    def synthetic_data(self, data_grid) -> np.ndarray:
        """Noise-free data from the truth solved on a (finer) separate grid."""
        fine = DarcyProblem(data_grid, self.truth, self.f, self.obs_points)
        return fine.point_values(fine.solve_darcy(fine.u_true))

    def linearize(self, u) -> DarcyLinearization:
        return DarcyLinearization(self, np.asarray(u, dtype=float))

    def apply(self, u):
        return self.linearize(u).value

    forward = apply

    def deriv(self, u, h):
        return self.linearize(u).deriv(h)

    def adjoint(self, u, g):
        return self.linearize(u).adjoint(g)

    def inner_obs(self, a, b):
        return float(np.dot(a, b))

    def inner_param(self, a, b):
        return self.grid.inner(a, b)
