"""Uniform interior-node grids on the unit square and field CSV I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    """``n x n`` interior nodes of a uniform mesh on ``[0, 1]^2``.

    Node ``(i, j)`` sits at ``((i + 1) h, (j + 1) h)`` with ``h = 1 / (n + 1)``.
    Fields are flattened row-major with ``y`` as the slow index, so
    ``k = j * n + i``.
    """

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"grid needs at least one interior node, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def axis(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``(x, y)`` coordinates of all interior nodes."""
        X, Y = np.meshgrid(self.axis, self.axis, indexing="xy")
        return X.ravel(), Y.ravel()

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Midpoint-rule L2 inner product."""
        return float(self.h**2 * np.dot(a, b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.inner(a, a)))

    def evaluate(self, func) -> np.ndarray:
        x, y = self.coords()
        return np.asarray(func(x, y), dtype=float)


def save_field_csv(path, values: np.ndarray, grid: Grid) -> None:
    """Write a nodal field as an ``n x n`` CSV block (one grid row per line)."""
    values = np.asarray(values, dtype=float)
    if values.size != grid.size:
        raise ValueError(f"field has {values.size} entries, grid expects {grid.size}")
    rows = values.reshape(grid.n, grid.n)
    with open(Path(path), "w", newline="") as fh:
        fh.write(f"# nx={grid.n},ny={grid.n},h={grid.h!r}\n")
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_field_csv(path) -> tuple[np.ndarray, Grid]:
    with open(Path(path)) as fh:
        header = fh.readline().lstrip("#").strip()
        meta = dict(item.split("=") for item in header.split(","))
        nx, ny = int(meta["nx"]), int(meta["ny"])
        if nx != ny:
            raise ValueError("only square grids are supported")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (ny, nx):
        raise ValueError(f"expected a {ny}x{nx} block, found {data.shape}")
    return data.ravel(), Grid(nx)
