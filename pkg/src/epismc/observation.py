"""Count-data likelihoods linking the hospitalized compartment to data.

The default model is a negative binomial whose mean is the latent
hospitalized count h (success probability p = r / (r + h)); a Poisson
variant is provided for real-data fits.  h is real-valued Euler output
and is used directly, never rounded.  An impossible observation yields
log-density -inf, never an exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "NegativeBinomial",
    "Poisson",
    "ObservationModel",
    "log_observation_density",
    "sample_observation",
]


@dataclass(frozen=True)
class NegativeBinomial:
    """Overdispersed counts: variance = h + h^2 / r.

    r is the dispersion; the sampling interfaces elsewhere carry its
    reciprocal phi = 1/r, which is the scale the dispersion priors are
    stated on (r = 1/phi at evaluation time).
    """

    r: float

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise ValueError(f"r must be > 0 (got {self.r})")


@dataclass(frozen=True)
class Poisson:
    """Equidispersed counts: variance = h (the large-r limit)."""


ObservationModel = Union[NegativeBinomial, Poisson]


def log_observation_density(y, h, model: ObservationModel):
    """Log pmf of observed count y given latent mean h.

    Broadcasts over y and h.  h = 0 makes both models a point mass at
    zero: returns 0 for y = 0 and -inf otherwise.
    """
    y = np.asarray(y, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(model, NegativeBinomial):
            r = model.r
            # xlogy gives y*log(h/(r+h)) = -inf at h=0, y>0 and 0 at y=0,
            # which is exactly the point-mass limit.
            out = (
                gammaln(y + r)
                - gammaln(r)
                - gammaln(y + 1.0)
                + r * np.log(r / (r + h))
                + xlogy(y, h / (r + h))
            )
        else:
            out = xlogy(y, h) - h - gammaln(y + 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def sample_observation(h, model: ObservationModel, rng: np.random.Generator):
    """Draw counts distributed per log_observation_density; broadcasts over h.

    The negative binomial is drawn as a Gamma-Poisson mixture
    (Gamma(shape=r, scale=h/r) rate, then Poisson), which degenerates to
    the constant 0 at h = 0 for both models.
    """
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0):
        raise ValueError("h must be >= 0")
    if isinstance(model, NegativeBinomial):
        rate = rng.gamma(shape=model.r, scale=h / model.r)
        out = rng.poisson(rate)
    else:
        out = rng.poisson(h)
    if np.ndim(out) == 0:
        return int(out)
    return out
