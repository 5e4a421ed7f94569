"""Potential-coefficient identification for ``-lap p + u p = f``, ``p = g`` on the boundary.

The state is observed on every interior node. Discretization is the
five-point Laplacian on a :class:`~irgnm.grid.Grid`; with the manufactured
data ``f = (x + y) u_true`` and ``g = x + y`` the discrete state is exactly
``x + y`` because the stencil is exact on linear functions.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PDESolveError
from .grid import Grid

__all__ = [
    "PotentialProblem",
    "smooth_truth",
    "discontinuous_truth",
    "truth_field",
    "laplacian",
    "boundary_lift",
]


def smooth_truth(x, y):
    return np.exp(-100 * ((x - 0.3) ** 2 + (y - 0.7) ** 2)) + 0.5 * np.exp(
        -100 * ((x - 0.7) ** 2 + (y - 0.35) ** 2)
    )


def discontinuous_truth(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.zeros(np.broadcast(x, y).shape)
    rect = (x >= 0.6) & (x <= 0.8) & (y >= 0.2) & (y <= 0.5)
    disk = (x - 0.3) ** 2 + (y - 0.7) ** 2 < 0.15**2
    u[rect] = 0.5
    u[disk] = 1.0
    return u


_TRUTHS = {"smooth": smooth_truth, "discontinuous": discontinuous_truth}


def truth_field(kind: str, grid: Grid) -> np.ndarray:
    try:
        func = _TRUTHS[kind]
    except KeyError:
        raise ValueError(f"unknown truth {kind!r}; choose from {sorted(_TRUTHS)}") from None
    return grid.evaluate(func)


def laplacian(grid: Grid) -> sp.csr_matrix:
    """Five-point ``-lap_h`` on interior nodes with homogeneous Dirichlet data."""
    n = grid.n
    t = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = sp.identity(n)
    return ((sp.kron(eye, t) + sp.kron(t, eye)) / grid.h**2).tocsr()


def boundary_lift(grid: Grid, g) -> np.ndarray:
    """Right-hand-side contribution of Dirichlet data ``g(x, y)``."""
    n, h = grid.n, grid.h
    a = grid.axis
    lift = np.zeros((n, n))
    lift[:, 0] += g(np.zeros(n), a)
    lift[:, -1] += g(np.ones(n), a)
    lift[0, :] += g(a, np.zeros(n))
    lift[-1, :] += g(a, np.ones(n))
    return lift.ravel() / h**2


def _factorize(matrix: sp.spmatrix):
    try:
        lu = spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise PDESolveError(f"singular system matrix: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e3 * np.finfo(float).eps * pivots.max():
        raise PDESolveError(
            f"system matrix is numerically singular (smallest pivot {pivots.min():.3e})"
        )
    return lu


class PotentialLinearization:
    """State and derivative operators of the potential problem at one iterate."""

    def __init__(self, problem: "PotentialProblem", u: np.ndarray):
        self.problem = problem
        self.u = u
        self.matrix = problem.system_matrix(u)
        self.lu = _factorize(self.matrix)
        self.value = self.lu.solve(problem.rhs)

    def _col(self, a):
        return self.value if a.ndim == 1 else self.value[:, None]

    def deriv(self, h):
        h = np.asarray(h, dtype=float)
        return self.lu.solve(-self._col(h) * h)

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        return -self._col(g) * self.lu.solve(g)


class PotentialProblem:
    """Forward map ``u -> p`` on interior nodes with full-field observation.

    Parameters
    ----------
    grid : Grid or int
        Interior nodes per direction.
    truth : {"smooth", "discontinuous"}
        Coefficient used to manufacture ``f``.
    f, g : callable, optional
        Override the source and the Dirichlet data; both take ``(x, y)``.
    """

    def __init__(self, grid, truth: str = "smooth", f=None, g=None):
        self.grid = grid if isinstance(grid, Grid) else Grid(int(grid))
        self.truth = truth
        self.u_true = truth_field(truth, self.grid)
        self.g = g if g is not None else (lambda x, y: x + y)
        if f is None:
            x, y = self.grid.coords()
            self.f = (x + y) * self.u_true
        else:
            self.f = self.grid.evaluate(f)
        self.laplacian = laplacian(self.grid)
        self.rhs = self.f + boundary_lift(self.grid, self.g)
        self.dim_param = self.dim_obs = self.grid.size

    def exact_data(self) -> np.ndarray:
        """Noise-free observation ``x + y``, evaluated analytically."""
        x, y = self.grid.coords()
        return x + y

    def system_matrix(self, u) -> sp.csr_matrix:
        return (self.laplacian + sp.diags(np.asarray(u, dtype=float))).tocsr()

    def solve_pde(self, u, f=None, g=None) -> np.ndarray:
        """State for coefficient ``u``; ``f``/``g`` default to the problem's own."""
        rhs = self.rhs
        if f is not None or g is not None:
            f_vals = self.f if f is None else (f if isinstance(f, np.ndarray) else self.grid.evaluate(f))
            rhs = f_vals + boundary_lift(self.grid, self.g if g is None else g)
        return _factorize(self.system_matrix(u)).solve(rhs)

    def linearize(self, u) -> PotentialLinearization:
        return PotentialLinearization(self, np.asarray(u, dtype=float))

    def apply(self, u):
        return self.linearize(u).value

    def deriv(self, u, h):
        return self.linearize(u).deriv(h)

    def adjoint(self, u, g):
        return self.linearize(u).adjoint(g)

    def inner_obs(self, a, b):
        return self.grid.inner(a, b)

    inner_param = inner_obs

    def kkt_step(self, u_n, u_anchor, w, alpha, *, lin=None):
        """Gauss-Newton step through the coupled adjoint/state block system.

        Solves::

            [ A           I ] [lam]   [ w - p               ]
            [ -p^2/alpha  A ] [ v ] = [ (u_n - u_anchor) p  ]

        with ``A = -lap_h + diag(u_n)`` and ``p = F(u_n)``, then returns
        ``u_anchor - lam * p / alpha``. The second block row is multiplied by
        ``alpha`` before factorizing so that tiny ``alpha`` does not unbalance
        the pivots.
        """
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        lin = self.linearize(u_n) if lin is None else lin
        p = lin.value
        a = lin.matrix
        block = sp.bmat(
            [[a, sp.identity(self.dim_param)], [sp.diags(-(p**2)), alpha * a]],
            format="csc",
        )
        rhs = np.concatenate([w - p, alpha * (u_n - u_anchor) * p])
        try:
            sol = _factorize(block).solve(rhs)
        except PDESolveError as exc:
            raise PDESolveError(f"KKT block solve failed: {exc}") from exc
        lam = sol[: self.dim_param]
        return u_anchor - lam * p / alpha
