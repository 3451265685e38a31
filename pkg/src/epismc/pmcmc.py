"""Particle-marginal Metropolis-Hastings over the static parameters.

The filter's log-likelihood estimate stands in for the intractable
likelihood inside a Gaussian random-walk Metropolis chain.  The
current value's estimate is stored and reused, never recomputed; that
stored-likelihood convention is what makes the sampler exact despite
the noisy estimator.  The proposal covariance is a fixed diagonal
during burn-in, then 2.38^2/d times the running covariance of the
chain plus a small jitter.  run_chain estimates that running
covariance recursively with a diminishing step m^-0.7 rather than a
flat average: step 1/m would be the batch empirical covariance, but
it never forgets the walk from the prior starting point into the
posterior bulk, and on sharply identified coordinates (eta's
conditional width here is ~500x narrower than its prior) that
transient keeps the proposal absurdly wide for the rest of a
desk-length run.  On top of that shape, run_chain
adapts a bounded scalar Robbins-Monro step-size factor toward a 0.15
acceptance rate (the optimum sits well below the classical 0.234 when
the likelihood is estimated rather than exact), and always adds a
small fixed floor -- a quarter of the burn-in diagonal -- to the
proposal covariance.  The floor is what keeps the chain alive: if the
stored likelihood estimate happens to be a lucky draw, acceptance
stalls, and a pure scale adapter would shrink proposals toward zero,
at which point every "new" proposal re-draws the estimator at the same
point and the chain has to beat the running maximum of its own
likelihood draws.  Keeping a minimum genuine step means a proposal is
always a different parameter point with a freshly centred estimate, so
the chain can ratchet out.  The Robbins-Monro gain decays as m^-0.6,
so the adaptation is diminishing and the stationary law is untouched.

The proposal itself is a two-component symmetric mixture: with
probability 0.15 the step perturbs one free coordinate, chosen
uniformly, by a wide Gaussian (sd = that coordinate's prior width / 3)
instead of taking the adapted full-dimensional step.  The wide
component does two jobs.  It ends long stuck stretches: in flat,
overdispersed corners of the parameter space the estimator's noise has
a heavy right tail, an accepted lucky estimate can sit hundreds of
nats above the local typical value, and no achievable local move beats
it -- but one wide jump into decent territory does.  And it bootstraps
the covariance adaptation on weakly identified coordinates: the
adapted kernel only learns a coordinate's posterior scale after the
chain has travelled it, which for a near-flat coordinate (lambda's
posterior here is a broad ridge) never happens under the adapted
kernel alone, because its scale estimate starts tiny and stays tiny.
A single-coordinate jump has real acceptance probability where a
simultaneous wide jump in every coordinate has essentially none.  A
centred Gaussian mixture is still symmetric, so the Hastings
correction stays exactly zero.

Proposals are made on the natural scale; a draw outside a prior's
support is rejected through its -inf log-prior without running the
filter.  Coordinates with Fixed priors never move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .filtering import FilterConfig, run_filter
from .priors import Fixed, PriorDist
from .rng import derive_seed, substream

__all__ = [
    "ParamVector",
    "PriorSpec",
    "Chain",
    "PmcmcConfig",
    "PmcmcInitError",
    "log_prior",
    "propose",
    "initial_proposal_cov",
    "adapt_covariance",
    "run_chain",
    "chain_summary",
    "posterior_mean",
]

_COORDS = ("eta", "lam", "mu", "sigma", "phi")


class PmcmcInitError(RuntimeError):
    """No finite-likelihood starting point was found within the retry budget."""


@dataclass(frozen=True)
class ParamVector:
    """Sampled static parameters.

    eta: hospital discharge rate; lam: driver mean-reversion rate;
    mu, sigma: mean and stationary sd of log beta; phi = 1/r is the
    count-dispersion scale, None under a Poisson likelihood.
    """

    eta: float
    lam: float
    mu: float
    sigma: float
    phi: Optional[float] = None


@dataclass(frozen=True)
class PriorSpec:
    """Per-coordinate prior descriptors; phi = None drops the coordinate."""

    eta: PriorDist
    lam: PriorDist
    mu: PriorDist
    sigma: PriorDist
    phi: Optional[PriorDist] = None

    def active(self) -> List[Tuple[str, PriorDist]]:
        out = []
        for name in _COORDS:
            dist = getattr(self, name)
            if dist is not None:
                out.append((name, dist))
        return out

    def active_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.active())

    def free_names(self) -> Tuple[str, ...]:
        return tuple(
            name for name, dist in self.active() if not isinstance(dist, Fixed)
        )

    def sample(self, rng: np.random.Generator) -> ParamVector:
        vals = {name: float(dist.sample(rng)) for name, dist in self.active()}
        return ParamVector(**vals)


@dataclass(frozen=True)
class Chain:
    """pMCMC output: one row per iteration, initial point excluded.

    draws columns follow `names`; fixed coordinates appear as constant
    columns.  log_posts holds the stored log-likelihood-plus-log-prior
    of the current point, so rejected rows repeat the previous value
    bit for bit.  proposal_cov_history is a list of (iteration,
    covariance) snapshots.
    """

    names: Tuple[str, ...]
    draws: np.ndarray
    log_posts: np.ndarray
    accepted: np.ndarray
    proposal_cov_history: List[Tuple[int, np.ndarray]]
    initial: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def param(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]


@dataclass(frozen=True)
class PmcmcConfig:
    """Chain length M, burn-in M_b < M, and the filter setup to score with."""

    iterations: int
    burn_in: int
    filter: FilterConfig
    cov_snapshot_every: int = 1000

    def __post_init__(self) -> None:
        if self.burn_in < 1:
            raise ValueError(f"burn_in must be >= 1 (got {self.burn_in})")
        if self.iterations <= self.burn_in:
            raise ValueError(
                f"iterations must exceed burn_in (got {self.iterations} <= {self.burn_in})"
            )
        if self.cov_snapshot_every < 1:
            raise ValueError("cov_snapshot_every must be >= 1")


def log_prior(theta: ParamVector, priors: PriorSpec) -> float:
    """Sum of coordinate log-densities; -inf anywhere outside support."""
    total = 0.0
    for name, dist in priors.active():
        value = getattr(theta, name)
        lp = dist.log_pdf(value)
        if lp == -np.inf:
            return -np.inf
        total += lp
    return total


def propose(
    current: ParamVector,
    cov: np.ndarray,
    priors: PriorSpec,
    rng: np.random.Generator,
) -> ParamVector:
    """Gaussian random-walk step on the free coordinates; Fixed ones untouched."""
    free = priors.free_names()
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape != (len(free), len(free)):
        raise ValueError(
            f"covariance shape {cov.shape} does not match {len(free)} free coordinates"
        )
    if len(free) == 0:
        return current
    x = np.array([getattr(current, name) for name in free])
    step = rng.multivariate_normal(np.zeros(len(free)), cov)
    return replace(current, **{name: float(v) for name, v in zip(free, x + step)})


def initial_proposal_cov(priors: PriorSpec) -> np.ndarray:
    """Burn-in diagonal: per-coordinate scale (prior width / 100)^2, floor 1e-8."""
    scales = []
    for name in priors.free_names():
        width = getattr(priors, name).width
        scales.append(max((width / 100.0) ** 2, 1e-8))
    return np.diag(scales)


def adapt_covariance(
    history: np.ndarray, m: int, burn_in: int, sigma0: np.ndarray
) -> np.ndarray:
    """Proposal covariance for iteration m.

    During burn-in (m <= burn_in) returns sigma0 unchanged; afterwards
    (2.38^2 / d) * empirical covariance of the free-coordinate history
    plus 1e-10 on the diagonal.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1 (got {m})")
    if m <= burn_in:
        return sigma0
    history = np.atleast_2d(np.asarray(history, dtype=np.float64))
    d = sigma0.shape[0]
    emp = np.atleast_2d(np.cov(history, rowvar=False, ddof=1))
    return (2.38**2 / d) * emp + 1e-10 * np.eye(d)


class _RunningCov:
    """Recursive chain mean/covariance with diminishing step n^-0.7.

    Step 1/n would reproduce the batch empirical covariance exactly;
    the slower decay makes the estimate forget the initialization
    transient (the walk from the prior draw into the posterior bulk),
    which otherwise dominates the scale of narrow coordinates for the
    rest of a desk-length run.  The covariance starts at the burn-in
    diagonal so the adapted kernel detaches from it continuously.
    """

    def __init__(self, d: int, init_cov: np.ndarray):
        self.count = 0
        self.mean = np.zeros(d)
        self.c = np.array(init_cov, dtype=np.float64)

    def push(self, x: np.ndarray) -> None:
        self.count += 1
        if self.count == 1:
            self.mean = np.asarray(x, dtype=np.float64).copy()
            return
        g = self.count**-0.7
        delta = x - self.mean
        self.mean += g * delta
        self.c += g * (np.outer(delta, delta) - self.c)

    def cov(self) -> np.ndarray:
        return self.c


def run_chain(
    observations, priors: PriorSpec, config: PmcmcConfig, rng_seed: int
) -> Chain:
    """Run the particle-marginal chain; deterministic given rng_seed.

    Substreams: (seed, 0) initial-point prior draws, (seed, 1) proposal
    noise, (seed, 2) acceptance uniforms; the filter at iteration m uses
    the derived seed (seed, 3, m), and initialization attempt k uses
    (seed, 4, k).  Covariance snapshots record the proposal covariance
    actually used, i.e. including the Robbins-Monro scale factor.
    """
    fconf = replace(config.filter, keep_history=False)
    names = priors.active_names()
    free = priors.free_names()
    d = len(free)
    sigma0 = initial_proposal_cov(priors)
    rng_init = substream(rng_seed, 0)
    rng_prop = substream(rng_seed, 1)
    rng_acc = substream(rng_seed, 2)

    theta = None
    cur_ll = -np.inf
    seen: Dict[str, List[float]] = {name: [] for name in names}
    for attempt in range(100):
        cand = priors.sample(rng_init)
        for name in names:
            seen[name].append(getattr(cand, name))
        ll = run_filter(
            observations, cand, fconf, derive_seed(rng_seed, 4, attempt)
        ).log_likelihood
        if np.isfinite(ll):
            theta = cand
            cur_ll = ll
            break
    if theta is None:
        spans = ", ".join(
            f"{name}~{getattr(priors, name)} sampled [{min(v):.4g}, {max(v):.4g}]"
            for name, v in seen.items()
        )
        raise PmcmcInitError(
            "no initialization with finite filter likelihood in 100 prior draws; "
            f"check the priors against the data: {spans}"
        )
    cur_post = cur_ll + log_prior(theta, priors)

    m_total = config.iterations
    draws = np.empty((m_total, len(names)))
    log_posts = np.empty(m_total)
    accepted = np.zeros(m_total, dtype=bool)
    cov_history: List[Tuple[int, np.ndarray]] = []
    running = _RunningCov(d, sigma0) if d else None
    if running is not None:
        running.push(np.array([getattr(theta, n) for n in free]))
    initial = np.array([getattr(theta, n) for n in names])
    log_step = 0.0  # Robbins-Monro scalar on top of the covariance shape
    if d:
        wide_sd = np.array([getattr(priors, n).width / 3.0 for n in free])

    for m in range(1, m_total + 1):
        if d == 0:
            # Every coordinate is pinned: the proposal is the current
            # point bit for bit, so accept by convention.
            draws[m - 1] = initial
            log_posts[m - 1] = cur_post
            accepted[m - 1] = True
            continue
        if m <= config.burn_in:
            shape = sigma0
        else:
            if m == config.burn_in + 1:
                log_step = 0.0  # rescale afresh on the adapted shape
            shape = (2.38**2 / d) * running.cov() + 1e-10 * np.eye(d)
        # additive floor: proposals must never degenerate to deltas, see
        # the module docstring
        cov = np.exp(log_step) * shape + 0.25 * sigma0
        if m == 1 or m == config.burn_in + 1 or m % config.cov_snapshot_every == 0 or m == m_total:
            cov_history.append((m, cov.copy()))
        use_wide = rng_prop.random() < 0.15
        if use_wide:
            j = int(rng_prop.integers(d))
            x = np.array([getattr(theta, n) for n in free])
            x[j] += wide_sd[j] * rng_prop.standard_normal()
            candidate = replace(theta, **{n: float(v) for n, v in zip(free, x)})
        else:
            candidate = propose(theta, cov, priors, rng_prop)
        lp = log_prior(candidate, priors)
        if lp == -np.inf:
            accept = False
            alpha = 0.0
        else:
            ll = run_filter(
                observations, candidate, fconf, derive_seed(rng_seed, 3, m)
            ).log_likelihood
            cand_post = ll + lp
            log_ratio = cand_post - cur_post
            alpha = float(np.exp(min(0.0, log_ratio)))
            if log_ratio >= 0:
                accept = True
            else:
                u = rng_acc.random()
                accept = u > 0.0 and np.log(u) < log_ratio
        if accept:
            theta = candidate
            cur_post = cand_post
        draws[m - 1] = [getattr(theta, n) for n in names]
        log_posts[m - 1] = cur_post
        accepted[m - 1] = accept
        running.push(np.array([getattr(theta, n) for n in free]))
        if not use_wide:
            # wide-kernel acceptance says nothing about the local scale
            log_step += min(0.25, 2.0 * m**-0.6) * (alpha - 0.15)
            log_step = float(np.clip(log_step, -3.0, 3.0))

    return Chain(
        names=names,
        draws=draws,
        log_posts=log_posts,
        accepted=accepted,
        proposal_cov_history=cov_history,
        initial=initial,
    )


def chain_summary(chain: Chain, burn_in_discard: int = 0) -> dict:
    """Per-parameter mean/sd/quantiles and acceptance rate over retained rows."""
    m_total = chain.draws.shape[0]
    if not 0 <= burn_in_discard < m_total:
        raise ValueError(
            f"burn_in_discard must be in [0, {m_total}) (got {burn_in_discard})"
        )
    kept = chain.draws[burn_in_discard:]
    acc = chain.accepted[burn_in_discard:]
    params = {}
    for j, name in enumerate(chain.names):
        col = kept[:, j]
        q05, q50, q95 = np.quantile(col, (0.05, 0.5, 0.95))
        params[name] = {
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if col.shape[0] > 1 else 0.0,
            "q05": float(q05),
            "q50": float(q50),
            "q95": float(q95),
        }
    return {
        "n_retained": int(kept.shape[0]),
        "acceptance_rate": float(acc.mean()),
        "params": params,
    }


def posterior_mean(chain: Chain, burn_in_discard: int = 0) -> ParamVector:
    """ParamVector of retained-draw means, e.g. for a conditional filter run."""
    summary = chain_summary(chain, burn_in_discard)
    means = {name: summary["params"][name]["mean"] for name in chain.names}
    return ParamVector(**means)
