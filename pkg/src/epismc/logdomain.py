"""Numerically stable log-domain primitives for weighted ensembles.

LogSumExp is computed by the pairwise recurrence
max(a, b) + log1p(exp(-|a - b|)) scanned left to right, so raw weights
are never exponentiated; systematic resampling compares evenly spaced
log-thresholds against the running log-CDF.  -inf entries are legal
individual weights (impossible particles); an all--inf vector raises
ParticleDegeneracyError.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "ParticleDegeneracyError",
    "log_sum_exp_scan",
    "normalize_log_weights",
    "systematic_resample_log",
    "effective_sample_size",
]


class ParticleDegeneracyError(RuntimeError):
    """Every weight in the ensemble is -inf; no particle explains the data."""

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message)
        self.t = t


@njit(cache=True, inline="always")
def _log_add(a: float, b: float) -> float:
    # Jacobian logarithm: log(e^a + e^b) without leaving the log domain.
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a < b:
        a, b = b, a
    return a + np.log1p(np.exp(b - a))


@njit(cache=True)
def _scan_kernel(w: np.ndarray, out: np.ndarray) -> None:
    acc = w[0]
    out[0] = acc
    for k in range(1, w.shape[0]):
        acc = _log_add(acc, w[k])
        out[k] = acc


@njit(cache=True)
def _systematic_kernel(
    log_cdf: np.ndarray, total: float, s: float, idx: np.ndarray
) -> None:
    # Thresholds log(s + k/n) for k = 0..n-1 swept against the running
    # log-CDF normalized by its final entry; s < 1/n keeps every
    # threshold below log 1, so the sweep always terminates.
    n = log_cdf.shape[0]
    j = 0
    for k in range(n):
        u = np.log(s + k / n)
        while j < n - 1 and log_cdf[j] - total < u:
            j += 1
        idx[k] = j


def _as_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ValueError("log-weights must be a non-empty 1-d sequence")
    if np.isnan(w).any():
        raise ValueError("log-weights must not contain NaN")
    return w


def log_sum_exp_scan(w) -> np.ndarray:
    """Running log-sums C[k] = log sum_{j<=k} exp(w[j]); non-decreasing.

    Raises ParticleDegeneracyError when every entry is -inf.
    """
    w = _as_weights(w)
    out = np.empty_like(w)
    _scan_kernel(w, out)
    if out[-1] == -np.inf:
        raise ParticleDegeneracyError("all log-weights are -inf")
    return out


def normalize_log_weights(w):
    """Shift weights so exp of them sums to one; returns (normalized, total)."""
    w = _as_weights(w)
    out = np.empty_like(w)
    _scan_kernel(w, out)
    total = out[-1]
    if total == -np.inf:
        raise ParticleDegeneracyError("all log-weights are -inf")
    return w - total, float(total)


def systematic_resample_log(normalized, rng: np.random.Generator) -> np.ndarray:
    """Ancestor indices from one uniform draw and evenly spaced strata.

    Expects normalized log-weights (exp-sum 1 within 1e-6).  The copy
    count of particle k deviates from n*exp(normalized[k]) by less than
    one in either direction, the hallmark of systematic resampling.
    """
    w = _as_weights(normalized)
    n = w.shape[0]
    cdf = np.empty_like(w)
    _scan_kernel(w, cdf)
    total = cdf[-1]
    if total == -np.inf:
        raise ParticleDegeneracyError("all log-weights are -inf")
    if abs(total) > 1e-6:
        raise ValueError(
            f"weights are not normalized (log of exp-sum is {total:.3g}, expected 0)"
        )
    s = rng.uniform(0.0, 1.0 / n)
    idx = np.empty(n, dtype=np.int64)
    _systematic_kernel(cdf, total, s, idx)
    return idx


def effective_sample_size(normalized) -> float:
    """1 / sum of squared weights: n when uniform, 1 when collapsed."""
    w = _as_weights(normalized)
    out = np.empty_like(w)
    _scan_kernel(2.0 * w, out)
    if out[-1] == -np.inf:
        raise ParticleDegeneracyError("all log-weights are -inf")
    return float(np.exp(-out[-1]))
