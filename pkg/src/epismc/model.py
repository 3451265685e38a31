"""Compartment dynamics and stochastic transmission-rate drivers.

The latent state couples a deterministic SIHR system (susceptible,
infected, hospitalized, recovered) to a time-varying transmission rate
beta_t.  Four driver processes for beta_t are provided.  The default,
mean-reverting log-scale driver keeps beta_t > 0 on every path and has
an exact transition, so it is stepped once per observation interval at
any dt without discretization error; the compartments are advanced by
forward Euler substeps in between.

All operations are pure given an explicit RNG stream and broadcast over
numpy arrays, so a whole ensemble of paths can be simulated with one
call by passing array-valued state fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Tuple, Union

import numpy as np

from .rng import substream

__all__ = [
    "StateVector",
    "SihrParams",
    "BkParams",
    "BlackKarasinski",
    "OrnsteinUhlenbeck",
    "BrownianMotion",
    "GeometricBrownianMotion",
    "DriverKind",
    "Trajectory",
    "sihr_derivatives",
    "euler_step",
    "bk_exact_step",
    "driver_step",
    "advance_log_beta",
    "simulate_trajectory",
]

ArrayLike = Union[float, np.ndarray]

# Floor applied to beta when a linear-scale driver crosses zero; keeps
# log_beta finite while the degenerate flag records the event.
_BETA_FLOOR = 1e-300


@dataclass(frozen=True)
class StateVector:
    """One latent state (or an array-shaped ensemble of them).

    Fields s, i, h, r are person counts; log_beta is the natural log of
    the transmission rate per day.  s + i + h + r is conserved by every
    step to within 1e-9 of the total population.
    """

    s: ArrayLike
    i: ArrayLike
    h: ArrayLike
    r: ArrayLike
    log_beta: ArrayLike

    @property
    def beta(self) -> ArrayLike:
        return np.exp(self.log_beta)

    @property
    def total(self) -> ArrayLike:
        return self.s + self.i + self.h + self.r


@dataclass(frozen=True)
class SihrParams:
    """Static rate constants of the compartment system.

    n: total population; alpha: exit rate from I (1/day); gamma:
    hospitalized fraction of exits in [0, 1]; eta: hospital discharge
    rate (1/day).
    """

    n: float
    alpha: float
    gamma: float
    eta: float

    def __post_init__(self) -> None:
        if not self.n > 0:
            raise ValueError(f"n must be > 0 (got {self.n})")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0 (got {self.alpha})")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1] (got {self.gamma})")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0 (got {self.eta})")


@dataclass(frozen=True)
class BkParams:
    """Constants of the mean-reverting log-scale driver.

    lam: mean-reversion rate (1/day); mu: long-term mean of log beta;
    sigma: stationary standard deviation of log beta.  The diffusion
    coefficient sigma*sqrt(2*lam) is derived, never stored.  sigma = 0
    is allowed: it gives the deterministic, noise-free driver used by
    exactness checks.
    """

    lam: float
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0 (got {self.lam})")
        if not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite (got {self.mu})")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0 (got {self.sigma})")


def _exact_ou_coefficients(lam: float, mu: float, sigma: float, dt: float):
    # x' = a x + b + c eps is the exact transition of a mean-reverting
    # process with stationary law N(mu, sigma^2); expm1 keeps c accurate
    # for small lam*dt.
    a = np.exp(-lam * dt)
    b = mu * (1.0 - a)
    c = sigma * np.sqrt(-np.expm1(-2.0 * lam * dt))
    return a, b, c


@dataclass(frozen=True)
class BlackKarasinski:
    """Mean-reverting driver on log beta; beta stays positive."""

    params: BkParams
    log_scale: ClassVar[bool] = True

    def transition_coefficients(self, dt: float) -> Tuple[float, float, float]:
        p = self.params
        return _exact_ou_coefficients(p.lam, p.mu, p.sigma, dt)


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """Mean-reverting driver on beta itself; can cross zero."""

    lam: float
    mu: float
    sigma: float
    log_scale: ClassVar[bool] = False

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0 (got {self.lam})")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0 (got {self.sigma})")

    def transition_coefficients(self, dt: float) -> Tuple[float, float, float]:
        return _exact_ou_coefficients(self.lam, self.mu, self.sigma, dt)


@dataclass(frozen=True)
class BrownianMotion:
    """Drifting random walk on beta itself; can cross zero."""

    drift: float
    volatility: float
    log_scale: ClassVar[bool] = False

    def __post_init__(self) -> None:
        if not self.volatility >= 0:
            raise ValueError(f"volatility must be >= 0 (got {self.volatility})")

    def transition_coefficients(self, dt: float) -> Tuple[float, float, float]:
        return 1.0, self.drift * dt, self.volatility * np.sqrt(dt)


@dataclass(frozen=True)
class GeometricBrownianMotion:
    """Random walk on log beta; beta stays positive."""

    drift: float
    volatility: float
    log_scale: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if not self.volatility >= 0:
            raise ValueError(f"volatility must be >= 0 (got {self.volatility})")

    def transition_coefficients(self, dt: float) -> Tuple[float, float, float]:
        return 1.0, self.drift * dt, self.volatility * np.sqrt(dt)


DriverKind = Union[
    BlackKarasinski, OrnsteinUhlenbeck, BrownianMotion, GeometricBrownianMotion
]


def sihr_derivatives(state: StateVector, params: SihrParams):
    """Instantaneous rates of change (dS, dI, dH, dR) per day.

    dS + dI + dH + dR = 0 in exact arithmetic; transmission uses
    beta = exp(state.log_beta).
    """
    beta = np.exp(state.log_beta)
    infection = beta * state.s * state.i / params.n
    exits = params.alpha * state.i
    discharge = params.eta * state.h
    ds = -infection
    di = infection - exits
    dh = params.gamma * exits - discharge
    dr = (1.0 - params.gamma) * exits + discharge
    return ds, di, dh, dr


def _clamp_rebalance(s, i, h, r):
    # Forward Euler can overshoot a near-empty compartment.  Clamp
    # negatives to zero and absorb the deficit into the largest
    # compartment so the population sum is preserved.
    stacked = np.stack(
        [
            np.asarray(s, dtype=np.float64),
            np.asarray(i, dtype=np.float64),
            np.asarray(h, dtype=np.float64),
            np.asarray(r, dtype=np.float64),
        ]
    )
    negative = stacked < 0.0
    if not negative.any():
        return s, i, h, r
    deficit = np.where(negative, stacked, 0.0).sum(axis=0)
    clamped = np.where(negative, 0.0, stacked)
    flat = clamped.reshape(4, -1)
    cols = np.arange(flat.shape[1])
    flat[np.argmax(flat, axis=0), cols] += np.asarray(deficit, np.float64).reshape(-1)
    out = flat.reshape(stacked.shape)
    if np.ndim(s) == 0:
        return float(out[0]), float(out[1]), float(out[2]), float(out[3])
    return out[0], out[1], out[2], out[3]


def euler_step(
    state: StateVector, params: SihrParams, dt: float, substeps: int
) -> StateVector:
    """Advance the compartments by forward Euler; log_beta is unchanged.

    The interval dt is split into `substeps` equal increments; beta is
    held fixed at exp(state.log_beta) throughout.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1 (got {substeps})")
    hdt = dt / substeps
    beta = np.exp(state.log_beta)
    s, i, h, r = state.s, state.i, state.h, state.r
    for _ in range(substeps):
        infection = beta * s * i / params.n
        exits = params.alpha * i
        discharge = params.eta * h
        s2 = s - hdt * infection
        i2 = i + hdt * (infection - exits)
        h2 = h + hdt * (params.gamma * exits - discharge)
        r2 = r + hdt * ((1.0 - params.gamma) * exits + discharge)
        s, i, h, r = _clamp_rebalance(s2, i2, h2, r2)
    return StateVector(s=s, i=i, h=h, r=r, log_beta=state.log_beta)


def bk_exact_step(log_beta: ArrayLike, bk: BkParams, dt: float, epsilon: ArrayLike):
    """Exact one-shot transition of log beta over any horizon dt >= 0.

    Returns exp(-lam dt) log_beta + mu (1 - exp(-lam dt))
    + sigma sqrt(1 - exp(-2 lam dt)) epsilon; valid for any dt, so the
    driver never needs sub-stepping.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0 (got {dt})")
    a, b, c = _exact_ou_coefficients(bk.lam, bk.mu, bk.sigma, dt)
    return a * log_beta + b + c * epsilon


def driver_step(value: ArrayLike, driver: DriverKind, dt: float, epsilon: ArrayLike):
    """Advance the driver's natural-scale value by one interval.

    Log-scale drivers take and return log beta; linear-scale drivers
    take and return beta and may step to beta <= 0, reported in the
    returned degenerate flag (the value itself is passed through
    unclamped).  Returns (advanced value, degenerate flag).
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    a, b, c = driver.transition_coefficients(dt)
    advanced = a * value + b + c * epsilon
    if driver.log_scale:
        never = np.zeros(np.shape(advanced), bool) if np.ndim(advanced) else False
        return advanced, never
    degenerate = advanced <= 0.0
    return advanced, degenerate


def advance_log_beta(
    log_beta: ArrayLike, driver: DriverKind, dt: float, epsilon: ArrayLike
):
    """Advance log beta under any driver; returns (new log_beta, degenerate).

    Linear-scale drivers run on beta = exp(log_beta); a step to
    beta <= 0 is flagged degenerate and floored at a tiny positive value
    so log_beta stays finite (downstream consumers weight such paths
    out).
    """
    a, b, c = driver.transition_coefficients(dt)
    if driver.log_scale:
        advanced = a * log_beta + b + c * epsilon
        degenerate = np.zeros(np.shape(advanced), bool) if np.ndim(advanced) else False
        return advanced, degenerate
    beta = np.exp(log_beta)
    advanced = a * beta + b + c * epsilon
    degenerate = advanced <= 0.0
    safe = np.log(np.maximum(advanced, _BETA_FLOOR))
    if np.ndim(safe) == 0:
        return float(safe), bool(degenerate)
    return safe, degenerate


@dataclass(frozen=True)
class Trajectory:
    """A simulated path (or array-shaped batch of paths).

    Arrays have shape (steps + 1,) + batch_shape and include the initial
    state at index 0.  `degenerate` is a cumulative flag: once a path's
    driver has crossed zero it stays flagged.
    """

    times: np.ndarray
    s: np.ndarray
    i: np.ndarray
    h: np.ndarray
    r: np.ndarray
    log_beta: np.ndarray
    degenerate: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)

    def __len__(self) -> int:
        return self.times.shape[0]

    def __getitem__(self, k: int) -> StateVector:
        return StateVector(
            s=self.s[k],
            i=self.i[k],
            h=self.h[k],
            r=self.r[k],
            log_beta=self.log_beta[k],
        )


def simulate_trajectory(
    initial: StateVector,
    sihr: SihrParams,
    driver: DriverKind,
    t_end: float,
    dt: float = 1.0,
    substeps: int = 10,
    rng_seed: int = 0,
) -> Trajectory:
    """Simulate floor(t_end/dt) steps, alternating driver and Euler updates.

    The driver advances once per interval (its transition is exact at
    any horizon); the compartments then take `substeps` Euler increments
    with beta held fixed.  Deterministic given rng_seed.  Array-valued
    initial fields simulate a whole batch of independent paths.
    """
    if t_end < dt:
        raise ValueError(f"t_end must be >= dt (got t_end={t_end}, dt={dt})")
    steps = int(np.floor(t_end / dt + 1e-12))
    rng = substream(rng_seed)
    shape = np.shape(initial.log_beta)
    full = (steps + 1,) + shape

    s = np.empty(full)
    i = np.empty(full)
    h = np.empty(full)
    r = np.empty(full)
    lb = np.empty(full)
    dead = np.zeros(full, dtype=bool)
    s[0], i[0], h[0], r[0], lb[0] = initial.s, initial.i, initial.h, initial.r, initial.log_beta

    state = initial
    degenerate = np.zeros(shape, dtype=bool) if shape else False
    for t in range(1, steps + 1):
        eps = rng.standard_normal(shape) if shape else rng.standard_normal()
        new_lb, dead_now = advance_log_beta(state.log_beta, driver, dt, eps)
        degenerate = degenerate | dead_now
        state = euler_step(
            StateVector(s=state.s, i=state.i, h=state.h, r=state.r, log_beta=new_lb),
            sihr,
            dt,
            substeps,
        )
        s[t], i[t], h[t], r[t], lb[t] = state.s, state.i, state.h, state.r, state.log_beta
        dead[t] = degenerate

    return Trajectory(
        times=np.arange(steps + 1) * dt,
        s=s,
        i=i,
        h=h,
        r=r,
        log_beta=lb,
        degenerate=dead,
    )
