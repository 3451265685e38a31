"""Sequential Monte Carlo over the coupled compartment/driver state space.

Per observation time the filter advances the driver once (exact
transition), takes Euler substeps on the compartments, weights each
particle by the count likelihood of the hospitalized mean, normalizes
in the log domain, and systematically resamples.  The marginal
log-likelihood estimate accumulates sum_t (w_hat_t - log N_p) with the
sum starting at t = 1; the observation at t = 0 only anchors plots.

Randomness is pre-drawn from counter-based substreams keyed on
(seed, 0) initial-state draws, (seed, 1) driver noise, (seed, 2)
resampling uniforms, so results are reproducible and independent of
thread count.  The hot loop is a compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numba import njit
from scipy.special import ndtri

from .logdomain import _scan_kernel, _systematic_kernel
from .model import (
    BkParams,
    BlackKarasinski,
    DriverKind,
    SihrParams,
    StateVector,
)
from .observation import NegativeBinomial, ObservationModel
from .priors import PriorDist
from .rng import substream

__all__ = [
    "InitialStatePrior",
    "FilterConfig",
    "ParticleEnsemble",
    "FilterResult",
    "BAND_COORDS",
    "PATH_COORDS",
    "run_filter",
    "rmse_beta",
]

# Coordinate order of quantile_bands (beta, not its log, for plotting)
# and of filtered_paths (raw latent state).
BAND_COORDS = ("s", "i", "h", "r", "beta")
PATH_COORDS = ("s", "i", "h", "r", "log_beta")

_BETA_FLOOR = 1e-300


@dataclass(frozen=True)
class InitialStatePrior:
    """Distribution of the state at t = 0.

    i0 is drawn per particle; h0 and r0 are fixed at zero and
    s0 = N - i0.  beta0 draws the initial transmission rate directly;
    beta0 = None instead draws log beta0 from the stationary law
    N(mu, sigma^2) of the mean-reverting log-scale driver.
    """

    i0: PriorDist
    beta0: Optional[PriorDist] = None


@dataclass(frozen=True)
class FilterConfig:
    """Static filter setup; per-run parameters arrive via theta.

    theta.eta replaces sihr.eta, theta.(lam, mu, sigma) rebuild the
    mean-reverting driver, and theta.phi (when not None) selects a
    negative binomial with r = 1/phi over obs_model.
    resample_threshold = None resamples unconditionally every step; a
    fraction tau in (0, 1] resamples only when ESS < tau * n_particles.
    """

    n_particles: int
    sihr: SihrParams
    driver: DriverKind
    obs_model: ObservationModel
    init: InitialStatePrior
    dt: float = 1.0
    substeps: int = 10
    resample_threshold: Optional[float] = None
    keep_history: bool = True

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError(f"n_particles must be >= 2 (got {self.n_particles})")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0 (got {self.dt})")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1 (got {self.substeps})")
        if self.resample_threshold is not None and not (
            0.0 < self.resample_threshold <= 1.0
        ):
            raise ValueError(
                f"resample_threshold must be in (0, 1] (got {self.resample_threshold})"
            )


@dataclass(frozen=True)
class ParticleEnsemble:
    """The weighted particle set at one time index."""

    particles: StateVector
    log_weights: np.ndarray
    t: int


@dataclass(frozen=True)
class FilterResult:
    """Output of one filter run.

    quantile_bands has shape (T+1, 5, 3): BAND_COORDS x (q05, q50, q95)
    computed from the stored post-resampling snapshots; filtered_paths
    has shape (T+1, 5, n_particles) in PATH_COORDS order; both are None
    when history was not kept or the run degenerated.  weight_history
    holds the carried normalized log-weights per time (uniform after a
    resampling step).
    """

    log_likelihood: float
    times: np.ndarray
    quantile_bands: Optional[np.ndarray]
    filtered_paths: Optional[np.ndarray]
    weight_history: Optional[np.ndarray]
    degenerate_at: Optional[int]

    def band(self, coord: str) -> np.ndarray:
        """(T+1, 3) array of (q05, q50, q95) for one coordinate of BAND_COORDS."""
        if self.quantile_bands is None:
            raise ValueError("no quantile bands were stored for this run")
        return self.quantile_bands[:, BAND_COORDS.index(coord), :]

    def ensemble_at(self, t: int) -> ParticleEnsemble:
        if self.filtered_paths is None:
            raise ValueError("no particle history was stored for this run")
        snap = self.filtered_paths[t]
        return ParticleEnsemble(
            particles=StateVector(
                s=snap[0], i=snap[1], h=snap[2], r=snap[3], log_beta=snap[4]
            ),
            log_weights=self.weight_history[t],
            t=t,
        )


@njit(cache=True)
def _filter_kernel(
    y,
    s,
    i,
    h,
    r,
    lb,
    a,
    b,
    c,
    log_scale,
    n_pop,
    alpha,
    gamma,
    eta,
    dt,
    substeps,
    obs_tag,
    obs_r,
    eps,
    us,
    ess_limit,
    store,
    hist,
    whist,
):
    n = s.shape[0]
    total_steps = y.shape[0] - 1
    log_n = np.log(n)
    hdt = dt / substeps
    carried = np.full(n, -log_n)
    logw = np.empty(n)
    cdf = np.empty(n)
    idx = np.empty(n, np.int64)
    s2 = np.empty(n)
    i2 = np.empty(n)
    h2 = np.empty(n)
    r2 = np.empty(n)
    lb2 = np.empty(n)
    if store:
        for k in range(n):
            hist[0, 0, k] = s[k]
            hist[0, 1, k] = i[k]
            hist[0, 2, k] = h[k]
            hist[0, 3, k] = r[k]
            hist[0, 4, k] = lb[k]
            whist[0, k] = -log_n
    loglik = 0.0
    for t in range(1, total_steps + 1):
        yt = y[t]
        for k in range(n):
            dead = False
            if log_scale:
                lbk = a * lb[k] + b + c * eps[t - 1, k]
                beta = np.exp(lbk)
            else:
                beta = a * np.exp(lb[k]) + b + c * eps[t - 1, k]
                if beta <= 0.0:
                    dead = True
                    beta = _BETA_FLOOR
                lbk = np.log(beta)
            lb[k] = lbk
            ss = s[k]
            ii = i[k]
            hh = h[k]
            rr = r[k]
            for _ in range(substeps):
                infection = beta * ss * ii / n_pop
                exits = alpha * ii
                discharge = eta * hh
                ns = ss - hdt * infection
                ni = ii + hdt * (infection - exits)
                nh = hh + hdt * (gamma * exits - discharge)
                nr = rr + hdt * ((1.0 - gamma) * exits + discharge)
                deficit = 0.0
                if ns < 0.0:
                    deficit += ns
                    ns = 0.0
                if ni < 0.0:
                    deficit += ni
                    ni = 0.0
                if nh < 0.0:
                    deficit += nh
                    nh = 0.0
                if nr < 0.0:
                    deficit += nr
                    nr = 0.0
                if deficit != 0.0:
                    # absorb into the largest compartment, first wins ties
                    if ns >= ni and ns >= nh and ns >= nr:
                        ns += deficit
                    elif ni >= nh and ni >= nr:
                        ni += deficit
                    elif nh >= nr:
                        nh += deficit
                    else:
                        nr += deficit
                ss = ns
                ii = ni
                hh = nh
                rr = nr
            s[k] = ss
            i[k] = ii
            h[k] = hh
            r[k] = rr
            if dead:
                lw = -np.inf
            elif obs_tag == 0:
                if hh <= 0.0:
                    lw = 0.0 if yt == 0.0 else -np.inf
                else:
                    lw = (
                        math.lgamma(yt + obs_r)
                        - math.lgamma(obs_r)
                        - math.lgamma(yt + 1.0)
                        + obs_r * np.log(obs_r / (obs_r + hh))
                        + yt * np.log(hh / (obs_r + hh))
                    )
            else:
                if hh <= 0.0:
                    lw = 0.0 if yt == 0.0 else -np.inf
                else:
                    lw = yt * np.log(hh) - hh - math.lgamma(yt + 1.0)
            logw[k] = carried[k] + lw
        _scan_kernel(logw, cdf)
        total = cdf[n - 1]
        if total == -np.inf:
            return -np.inf, t
        loglik += total
        ess = 0.0
        for k in range(n):
            carried[k] = logw[k] - total
            ess += np.exp(2.0 * carried[k])
        ess = 1.0 / ess
        if ess < ess_limit:
            sdraw = us[t - 1] / n
            _systematic_kernel(cdf, total, sdraw, idx)
            for k in range(n):
                j = idx[k]
                s2[k] = s[j]
                i2[k] = i[j]
                h2[k] = h[j]
                r2[k] = r[j]
                lb2[k] = lb[j]
            for k in range(n):
                s[k] = s2[k]
                i[k] = i2[k]
                h[k] = h2[k]
                r[k] = r2[k]
                lb[k] = lb2[k]
                carried[k] = -log_n
        if store:
            for k in range(n):
                hist[t, 0, k] = s[k]
                hist[t, 1, k] = i[k]
                hist[t, 2, k] = h[k]
                hist[t, 3, k] = r[k]
                hist[t, 4, k] = lb[k]
                whist[t, k] = carried[k]
    return loglik, -1


def _effective_driver(theta, config: FilterConfig) -> DriverKind:
    if isinstance(config.driver, BlackKarasinski):
        return BlackKarasinski(
            BkParams(lam=float(theta.lam), mu=float(theta.mu), sigma=float(theta.sigma))
        )
    return config.driver


def _effective_observation(theta, config: FilterConfig) -> ObservationModel:
    phi = getattr(theta, "phi", None)
    if phi is not None:
        if not phi > 0:
            raise ValueError(f"phi must be > 0 (got {phi})")
        return NegativeBinomial(r=1.0 / phi)
    return config.obs_model


def _lhs_uniforms(rng, n: int) -> np.ndarray:
    # one draw per stratum of (0,1), shuffled; each entry is exactly U(0,1)
    # marginally, so inverse-CDF draws keep the particle ensemble an exact
    # (variance-reduced) sample of the initial prior
    return (rng.permutation(n) + rng.random(n)) / n


def _draw_initial(
    init: InitialStatePrior, driver: DriverKind, n_pop: float, n_particles: int, rng
):
    # Stratify i0 and beta0 independently (Latin hypercube): the likelihood
    # estimate is linear in the initial empirical measure, so stratification
    # leaves it unbiased while flattening the heavy right tail it otherwise
    # has at slow-mixing parameter values (where initial-draw luck dominates).
    i0 = np.asarray(init.i0.ppf(_lhs_uniforms(rng, n_particles)), dtype=np.float64)
    if np.any(i0 < 0) or np.any(i0 > n_pop):
        raise ValueError("initial infected draws must lie in [0, N]")
    if init.beta0 is None:
        if not isinstance(driver, BlackKarasinski):
            raise ValueError(
                "stationary beta0 initialization requires the mean-reverting "
                "log-scale driver"
            )
        p = driver.params
        lb0 = p.mu + p.sigma * ndtri(_lhs_uniforms(rng, n_particles))
    else:
        b0 = np.asarray(init.beta0.ppf(_lhs_uniforms(rng, n_particles)), dtype=np.float64)
        lb0 = np.log(np.maximum(b0, _BETA_FLOOR))
    return i0, lb0


def run_filter(observations, theta, config: FilterConfig, rng_seed: int) -> FilterResult:
    """Filter the observation sequence; returns the likelihood estimate.

    observations are daily counts y_0..y_T; y_0 is not scored.  theta
    carries (eta, lam, mu, sigma, phi) as plain attributes.  On total
    degeneracy (every particle weight -inf at some t) the result has
    log_likelihood = -inf and degenerate_at set to the failing t, with
    no bands; callers treat that as an automatic reject.
    """
    y = np.asarray(observations, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ValueError("observations must be a non-empty 1-d sequence")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("observations must be non-negative integers")
    n_p = config.n_particles
    total_steps = y.shape[0] - 1

    sihr = replace(config.sihr, eta=float(theta.eta))
    driver = _effective_driver(theta, config)
    obs = _effective_observation(theta, config)
    if isinstance(obs, NegativeBinomial):
        obs_tag, obs_r = 0, obs.r
    else:
        obs_tag, obs_r = 1, 1.0
    a, b, c = driver.transition_coefficients(config.dt)

    i0, lb0 = _draw_initial(config.init, driver, sihr.n, n_p, substream(rng_seed, 0))
    s = sihr.n - i0
    i = i0
    h = np.zeros(n_p)
    r = np.zeros(n_p)
    lb = lb0

    eps = substream(rng_seed, 1).standard_normal((total_steps, n_p))
    us = substream(rng_seed, 2).random(total_steps)
    ess_limit = (
        np.inf
        if config.resample_threshold is None
        else config.resample_threshold * n_p
    )
    if config.keep_history:
        hist = np.empty((total_steps + 1, 5, n_p))
        whist = np.empty((total_steps + 1, n_p))
    else:
        hist = np.empty((1, 1, 1))
        whist = np.empty((1, 1))

    loglik, degenerate_t = _filter_kernel(
        y,
        s,
        i,
        h,
        r,
        lb,
        float(a),
        float(b),
        float(c),
        driver.log_scale,
        float(sihr.n),
        float(sihr.alpha),
        float(sihr.gamma),
        float(sihr.eta),
        float(config.dt),
        config.substeps,
        obs_tag,
        float(obs_r),
        eps,
        us,
        float(ess_limit),
        config.keep_history,
        hist,
        whist,
    )
    times = np.arange(total_steps + 1) * config.dt
    if degenerate_t >= 0:
        return FilterResult(
            log_likelihood=-np.inf,
            times=times,
            quantile_bands=None,
            filtered_paths=None,
            weight_history=None,
            degenerate_at=int(degenerate_t),
        )
    if not config.keep_history:
        return FilterResult(
            log_likelihood=float(loglik),
            times=times,
            quantile_bands=None,
            filtered_paths=None,
            weight_history=None,
            degenerate_at=None,
        )
    vals = np.empty_like(hist)
    vals[:, :4, :] = hist[:, :4, :]
    vals[:, 4, :] = np.exp(hist[:, 4, :])
    bands = np.moveaxis(np.quantile(vals, (0.05, 0.5, 0.95), axis=2), 0, 2)
    return FilterResult(
        log_likelihood=float(loglik),
        times=times,
        quantile_bands=bands,
        filtered_paths=hist,
        weight_history=whist,
        degenerate_at=None,
    )


def rmse_beta(result: FilterResult, truth, mask=None) -> float:
    """RMSE between the filtered median beta_t and a reference path.

    mask selects time indices (boolean array or integer indices);
    None scores every time point.  An empty selection is an error.
    """
    if result.quantile_bands is None:
        raise ValueError("filter result carries no quantile bands")
    median = result.quantile_bands[:, BAND_COORDS.index("beta"), 1]
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != median.shape:
        raise ValueError(
            f"truth length {truth.shape} does not match filter length {median.shape}"
        )
    if mask is None:
        selected = np.ones(median.shape[0], dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.dtype == bool:
            if mask.shape != median.shape:
                raise ValueError("boolean mask length does not match filter length")
            selected = mask
        else:
            selected = np.zeros(median.shape[0], dtype=bool)
            selected[mask] = True
    if not selected.any():
        raise ValueError("mask selects no time points")
    d = median[selected] - truth[selected]
    return float(np.sqrt(np.mean(d * d)))
