"""Sequential noisy observations, running averages and the misfit functional.

Observations are plain 1-d float arrays. Each noisy draw

    Y_n = y_true + sigma * xi_n

uses its own Philox stream keyed by ``(seed, n)``, so any single observation
can be regenerated without replaying the ones before it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "NoiseConfig",
    "AveragedData",
    "ObservationStream",
    "as_obs",
    "sample_observation",
    "average_update",
    "misfit",
    "save_observations_csv",
    "load_observations_csv",
]


def as_obs(values, dim: int | None = None) -> np.ndarray:
    """Validate and return an observation vector as a float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"observation must be 1-d, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"observation has length {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("observation contains non-finite entries")
    return arr


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    def generator(self, n: int) -> np.random.Generator:
        # Counter-based bit generator; the key is derived from (seed, n) only.
        ss = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(n)])
        return np.random.Generator(np.random.Philox(ss))


def sample_observation(y_true, noise: NoiseConfig, n: int) -> np.ndarray:
    """Return the ``n``-th noisy observation ``y_true + sigma * xi_n``."""
    y_true = as_obs(y_true)
    if noise.sigma == 0:
        return y_true.copy()
    xi = noise.generator(n).standard_normal(y_true.size)
    return y_true + noise.sigma * xi


@dataclass(frozen=True)
class AveragedData:
    """Arithmetic mean of the first ``count`` observations."""

    mean: np.ndarray
    count: int

    @classmethod
    def empty(cls, dim: int) -> "AveragedData":
        return cls(np.zeros(dim), 0)


def average_update(z: AveragedData, y_new) -> AveragedData:
    """One step of ``Z_{n+1} = (n Z_n + Y_{n+1}) / (n + 1)``."""
    y_new = np.asarray(y_new, dtype=float)
    if y_new.shape != z.mean.shape:
        raise ValueError(
            f"dimension mismatch: average has length {z.mean.size}, "
            f"observation has length {y_new.size}"
        )
    n = z.count
    return AveragedData((n * z.mean + y_new) / (n + 1), n + 1)


def misfit(g, w, inner: Callable[[np.ndarray, np.ndarray], float] = np.dot) -> float:
    """Shifted Gaussian log-likelihood ``0.5 <g, g> - <g, w>``.

    Can be negative. ``inner`` is the observation-space inner product.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    if g.shape != w.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {w.shape}")
    return float(0.5 * inner(g, g) - inner(g, w))


class ObservationStream:
    """Replayable source of ``Y_1, Y_2, ...`` around a fixed noise-free datum."""

    def __init__(self, y_true, noise: NoiseConfig):
        self.y_true = as_obs(y_true)
        self.noise = noise

    @property
    def dim(self) -> int:
        return self.y_true.size

    def observe(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError(f"observations are numbered from 1, got {n}")
        return sample_observation(self.y_true, self.noise, n)

    def __iter__(self) -> Iterator[np.ndarray]:
        n = 1
        while True:
            yield self.observe(n)
            n += 1

    def take(self, count: int) -> np.ndarray:
        """``(count, dim)`` array holding ``Y_1 ... Y_count``."""
        out = np.empty((count, self.dim))
        for k in range(count):
            out[k] = self.observe(k + 1)
        return out

    def average(self, count: int) -> AveragedData:
        z = AveragedData.empty(self.dim)
        for n in range(1, count + 1):
            z = average_update(z, self.observe(n))
        return z

    def checksum(self, count: int) -> str:
        h = hashlib.sha256()
        for n in range(1, count + 1):
            h.update(self.observe(n).tobytes())
        return h.hexdigest()


def save_observations_csv(path, observations: np.ndarray) -> None:
    """One row per observation, one column per component."""
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    count, dim = obs.shape
    with open(Path(path), "w", newline="") as fh:
        fh.write(f"# dim_obs={dim},count={count}\n")
        fh.write(",".join(f"y{k}" for k in range(dim)) + "\n")
        for row in obs:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_observations_csv(path) -> np.ndarray:
    with open(Path(path)) as fh:
        meta = dict(item.split("=") for item in fh.readline().lstrip("#").strip().split(","))
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    dim, count = int(meta["dim_obs"]), int(meta["count"])
    if data.shape != (count, dim):
        raise ValueError(f"header declares {count}x{dim}, file holds {data.shape}")
    return data
