"""Prior distribution descriptors for sampled parameters and initial states.

Four families cover every prior used here: Uniform(lo, hi), Beta(a, b),
Normal(mean, sd), and Fixed(value) for pinned coordinates.  Each
exposes log_pdf (-inf outside support), sample, ppf (for stratified
particle initialization), and a width used to scale the burn-in
proposal covariance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import betaincinv, betaln, ndtri

__all__ = ["Uniform", "Beta", "Normal", "Fixed", "PriorDist"]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo (got lo={self.lo}, hi={self.hi})")

    def log_pdf(self, x: float) -> float:
        if self.lo <= x <= self.hi:
            return -np.log(self.hi - self.lo)
        return -np.inf

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size=size)

    def ppf(self, q):
        return self.lo + (self.hi - self.lo) * np.asarray(q)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"need a > 0 and b > 0 (got a={self.a}, b={self.b})")

    def log_pdf(self, x: float) -> float:
        if not 0.0 < x < 1.0:
            return -np.inf
        return (
            (self.a - 1.0) * np.log(x)
            + (self.b - 1.0) * np.log1p(-x)
            - betaln(self.a, self.b)
        )

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size=size)

    def ppf(self, q):
        return betaincinv(self.a, self.b, np.asarray(q))

    @property
    def width(self) -> float:
        return 1.0  # support is (0, 1)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError(f"need sd > 0 (got {self.sd})")

    def log_pdf(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - np.log(self.sd) - 0.5 * _LOG_2PI

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.sd, size=size)

    def ppf(self, q):
        return self.mean + self.sd * ndtri(np.asarray(q))

    @property
    def width(self) -> float:
        return 6.0 * self.sd  # effective support for proposal scaling


@dataclass(frozen=True)
class Fixed:
    value: float

    def log_pdf(self, x: float) -> float:
        return 0.0 if x == self.value else -np.inf

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def ppf(self, q):
        return np.full(np.shape(q), self.value)

    @property
    def width(self) -> float:
        return 0.0


PriorDist = Union[Uniform, Beta, Normal, Fixed]
