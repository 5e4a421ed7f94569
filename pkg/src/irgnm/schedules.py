"""Regularization-parameter schedules and stopping rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Geometric",
    "Power",
    "HolderRate",
    "MaxIter",
    "Discrepancy",
    "alpha_geometric",
    "alpha_power",
    "alpha_holder",
    "holder_exponent",
    "noise_norm_estimate",
    "should_stop",
]


def _check_alpha0(alpha0: float) -> None:
    if not 0 < alpha0 <= 1:
        raise ValueError(f"alpha0 must lie in (0, 1], got {alpha0}")


def holder_exponent(nu_src: float, theta: float) -> float:
    """Decay exponent ``(1 - nu) / (2 - nu - theta (1 - nu))``."""
    if not 0 <= nu_src < 1:
        raise ValueError(f"nu_src must lie in [0, 1), got {nu_src}")
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    return (1 - nu_src) / (2 - nu_src - theta * (1 - nu_src))


@dataclass(frozen=True)
class Geometric:
    """``alpha_n = alpha0 * c_dec**(-n)``, defined for ``n >= 0``."""

    alpha0: float
    c_dec: float = 1.5

    def __post_init__(self):
        _check_alpha0(self.alpha0)
        if not self.c_dec > 1:
            raise ValueError(f"c_dec must exceed 1, got {self.c_dec}")

    first_index = 0

    def __call__(self, n: int) -> float:
        if n < 0:
            raise ValueError(f"geometric schedule index must be >= 0, got {n}")
        return self.alpha0 * self.c_dec ** (-n)


@dataclass(frozen=True)
class Power:
    """``alpha_n = alpha0 * n**(-beta)``, defined for ``n >= 1``."""

    alpha0: float
    beta: float

    def __post_init__(self):
        _check_alpha0(self.alpha0)
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    first_index = 1

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"power schedule starts at n=1, got {n}")
        return self.alpha0 * float(n) ** (-self.beta)


@dataclass(frozen=True)
class HolderRate:
    """Power schedule whose exponent follows from a Hoelder source index.

    ``nu_src`` is the source-condition exponent and ``theta`` the smoothing
    index of the noise space.
    """

    alpha0: float
    nu_src: float
    theta: float

    def __post_init__(self):
        _check_alpha0(self.alpha0)
        holder_exponent(self.nu_src, self.theta)

    first_index = 1

    @property
    def exponent(self) -> float:
        return holder_exponent(self.nu_src, self.theta)

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"Hoelder schedule starts at n=1, got {n}")
        return self.alpha0 * float(n) ** (-self.exponent)


def alpha_geometric(alpha0: float, c_dec: float, n: int) -> float:
    return Geometric(alpha0, c_dec)(n)


def alpha_power(alpha0: float, beta: float, n: int) -> float:
    return Power(alpha0, beta)(n)


def alpha_holder(alpha0: float, nu_src: float, theta: float, n: int) -> float:
    return HolderRate(alpha0, nu_src, theta)(n)


@dataclass(frozen=True)
class MaxIter:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"MaxIter needs m >= 1, got {self.m}")


@dataclass(frozen=True)
class Discrepancy:
    """Stop once ``residual <= tau * noise_norm``."""

    tau: float
    noise_norm: float

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError(f"tau must exceed 1, got {self.tau}")
        if not self.noise_norm >= 0:
            raise ValueError(f"noise norm estimate must be >= 0, got {self.noise_norm}")


def noise_norm_estimate(sigma: float, dim_obs: int, count: int = 1, weight: float = 1.0) -> float:
    """Expected norm of averaged white noise, ``sigma * sqrt(weight * dim / count)``.

    ``weight`` is the quadrature weight of the observation inner product
    (``h**2`` for full-field data, 1 for point data).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    return sigma * math.sqrt(weight * dim_obs / count)


def should_stop(rule, n: int, residual_norm: float) -> bool:
    if residual_norm < 0:
        raise ValueError("residual norm must be nonnegative")
    if rule is None:
        return False
    if isinstance(rule, MaxIter):
        return n >= rule.m
    if isinstance(rule, Discrepancy):
        return residual_norm <= rule.tau * rule.noise_norm
    raise TypeError(f"unknown stopping rule {rule!r}")
