"""Synthetic-data studies: generation, decorrelation sweep, misspecification grid.

Every job (one dataset, or one filter run on one dataset) owns a seed
derived from the experiment seed and the cell coordinates, so results
are independent of execution order and bit-reproducible.  Dataset seeds
are shared between the two sweeps: the matched-rate sweep is exactly
the diagonal of the misspecification grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .filtering import FilterConfig, InitialStatePrior, rmse_beta, run_filter
from .model import (
    BkParams,
    BlackKarasinski,
    SihrParams,
    StateVector,
    Trajectory,
    simulate_trajectory,
)
from .observation import NegativeBinomial, ObservationModel, sample_observation
from .pmcmc import ParamVector
from .priors import Uniform
from .rng import derive_seed, substream

__all__ = [
    "SyntheticParams",
    "SyntheticDataset",
    "RmseRecord",
    "RmseGrid",
    "ExperimentConfig",
    "DECORRELATION_GRID",
    "generate_synthetic",
    "experiment_decorrelation",
    "experiment_misspecification",
    "rank_aggregate",
]

# Decorrelation times 1/lam (days) swept by the sensitivity studies.
DECORRELATION_GRID: Tuple[int, ...] = (1,) + tuple(range(7, 99, 7))


@dataclass(frozen=True)
class SyntheticParams:
    """Full generating record for a synthetic epidemic (benchmark defaults)."""

    n: float = 1_000_000.0
    beta0: float = 0.4
    i0: float = 100.0
    gamma: float = 1.0 / 1000.0
    eta: float = 1.0 / 10.0
    alpha: float = 1.0 / 7.0
    sigma: float = 0.4
    lam: float = 1.0 / 35.0
    mu: float = -1.3
    r: float = 100.0

    def sihr(self) -> SihrParams:
        return SihrParams(n=self.n, alpha=self.alpha, gamma=self.gamma, eta=self.eta)

    def driver(self) -> BlackKarasinski:
        return BlackKarasinski(BkParams(lam=self.lam, mu=self.mu, sigma=self.sigma))

    def theta(self) -> ParamVector:
        return ParamVector(
            eta=self.eta, lam=self.lam, mu=self.mu, sigma=self.sigma, phi=1.0 / self.r
        )


@dataclass(frozen=True)
class SyntheticDataset:
    """A generated truth plus its observed counts; regenerable from (params, seed)."""

    params: SyntheticParams
    trajectory: Trajectory
    observations: np.ndarray
    seed: int

    @property
    def beta(self) -> np.ndarray:
        return self.trajectory.beta


def generate_synthetic(
    params: SyntheticParams = SyntheticParams(),
    t_end: float = 250.0,
    seed: int = 0,
    dt: float = 1.0,
    substeps: int = 10,
    obs_model: Optional[ObservationModel] = None,
) -> SyntheticDataset:
    """Simulate a truth path and draw one count per day (day 0 included).

    obs_model defaults to the negative binomial with the record's
    dispersion r.
    """
    initial = StateVector(
        s=params.n - params.i0,
        i=params.i0,
        h=0.0,
        r=0.0,
        log_beta=float(np.log(params.beta0)),
    )
    trajectory = simulate_trajectory(
        initial,
        params.sihr(),
        params.driver(),
        t_end,
        dt=dt,
        substeps=substeps,
        rng_seed=derive_seed(seed, 0),
    )
    if obs_model is None:
        obs_model = NegativeBinomial(params.r)
    observations = sample_observation(trajectory.h, obs_model, substream(seed, 1))
    return SyntheticDataset(
        params=params,
        trajectory=trajectory,
        observations=np.asarray(observations),
        seed=seed,
    )


@dataclass(frozen=True)
class RmseRecord:
    true_days: int
    filter_days: int
    replicate: int
    rmse: float
    rmse_masked: float


@dataclass(frozen=True)
class RmseGrid:
    rows: Tuple[RmseRecord, ...]

    def true_days_values(self) -> Tuple[int, ...]:
        return tuple(sorted({row.true_days for row in self.rows}))

    def filter_days_values(self) -> Tuple[int, ...]:
        return tuple(sorted({row.filter_days for row in self.rows}))

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared sweep settings; params is the truth template (lam overridden per cell)."""

    n_particles: int = 300
    t_end: float = 250.0
    dt: float = 1.0
    substeps: int = 10
    params: SyntheticParams = field(default_factory=SyntheticParams)
    mask_threshold: int = 5

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.mask_threshold < 0:
            raise ValueError("mask_threshold must be >= 0")


def _filter_setup(
    truth: SyntheticParams, filter_days: int, config: ExperimentConfig
) -> Tuple[ParamVector, FilterConfig]:
    # Statics fixed at truth except the driver's reversion rate, which
    # the filter believes is 1/filter_days.  The initial state stays
    # random: I_0 from its benchmark prior, log beta_0 from the
    # driver's stationary law (so sigma = 0 collapses every particle
    # onto the known constant-beta path).
    theta = ParamVector(
        eta=truth.eta,
        lam=1.0 / filter_days,
        mu=truth.mu,
        sigma=truth.sigma,
        phi=1.0 / truth.r,
    )
    fconf = FilterConfig(
        n_particles=config.n_particles,
        sihr=truth.sihr(),
        driver=truth.driver(),
        obs_model=NegativeBinomial(truth.r),
        init=InitialStatePrior(i0=Uniform(0.0, 1000.0), beta0=None),
        dt=config.dt,
        substeps=config.substeps,
        keep_history=True,
    )
    return theta, fconf


def _validate_days(days: Sequence[int], label: str) -> Tuple[int, ...]:
    days = tuple(days)
    if len(days) == 0:
        raise ValueError(f"{label} must be non-empty")
    if len(set(days)) != len(days):
        raise ValueError(f"{label} contains duplicates")
    for v in days:
        if int(v) != v or v < 1:
            raise ValueError(f"{label} entries must be whole days >= 1 (got {v})")
    return tuple(int(v) for v in days)


def _one_cell(
    true_days: int,
    filter_days: int,
    replicate: int,
    config: ExperimentConfig,
    seed: int,
) -> RmseRecord:
    truth = replace(config.params, lam=1.0 / true_days)
    dataset = generate_synthetic(
        truth,
        t_end=config.t_end,
        seed=derive_seed(seed, 0, true_days, replicate),
        dt=config.dt,
        substeps=config.substeps,
    )
    theta, fconf = _filter_setup(truth, filter_days, config)
    result = run_filter(
        dataset.observations,
        theta,
        fconf,
        derive_seed(seed, 1, true_days, filter_days, replicate),
    )
    reference = dataset.beta
    full = rmse_beta(result, reference)
    window = dataset.observations >= config.mask_threshold
    # a replicate whose counts never reach the threshold has no scoring
    # window; fall back to the full path rather than abort the sweep
    masked = rmse_beta(result, reference, window) if window.any() else full
    return RmseRecord(
        true_days=true_days,
        filter_days=filter_days,
        replicate=replicate,
        rmse=full,
        rmse_masked=masked,
    )


def experiment_decorrelation(
    decorrelation_days: Sequence[int] = DECORRELATION_GRID,
    replicates: int = 15,
    config: ExperimentConfig = ExperimentConfig(),
    seed: int = 0,
) -> RmseGrid:
    """Matched-rate sweep: per decorrelation time, generate `replicates`
    datasets and filter each with the true static parameters."""
    days = _validate_days(decorrelation_days, "decorrelation_days")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rows = []
    for dd in days:
        for rep in range(replicates):
            rows.append(_one_cell(dd, dd, rep, config, seed))
    return RmseGrid(rows=tuple(rows))


def experiment_misspecification(
    true_days: Sequence[int] = DECORRELATION_GRID,
    filter_days: Sequence[int] = DECORRELATION_GRID,
    replicates: int = 10,
    config: ExperimentConfig = ExperimentConfig(),
    seed: int = 0,
) -> RmseGrid:
    """Full cross product: every dataset filtered once per assumed rate."""
    tdays = _validate_days(true_days, "true_days")
    fdays = _validate_days(filter_days, "filter_days")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rows = []
    for td in tdays:
        for rep in range(replicates):
            for fd in fdays:
                rows.append(_one_cell(td, fd, rep, config, seed))
    return RmseGrid(rows=tuple(rows))


def rank_aggregate(grid: RmseGrid) -> Dict[int, float]:
    """Mean rank of each filter decorrelation time by masked RMSE.

    Within every (true_days, replicate) cell the filter settings are
    ranked 1 = lowest masked RMSE, ties averaged; ranks are then
    averaged over cells.  The grid must cover a full cross product.
    """
    fdays = grid.filter_days_values()
    cells: Dict[Tuple[int, int], Dict[int, float]] = {}
    for row in grid.rows:
        cell = cells.setdefault((row.true_days, row.replicate), {})
        if row.filter_days in cell:
            raise ValueError(
                f"duplicate cell entry for true_days={row.true_days}, "
                f"replicate={row.replicate}, filter_days={row.filter_days}"
            )
        cell[row.filter_days] = row.rmse_masked
    sums = {fd: 0.0 for fd in fdays}
    for key, cell in sorted(cells.items()):
        if tuple(sorted(cell)) != fdays:
            raise ValueError(
                f"grid is not a full cross product: cell {key} covers "
                f"{tuple(sorted(cell))} instead of {fdays}"
            )
        values = [cell[fd] for fd in fdays]
        ranks = rankdata(values, method="average")
        for fd, rank in zip(fdays, ranks):
            sums[fd] += float(rank)
    n_cells = len(cells)
    return {fd: sums[fd] / n_cells for fd in fdays}
