"""Stochastic SIHR epidemic modeling with a mean-reverting log
transmission rate, log-domain particle filtering, and particle-marginal
MCMC for joint inference from daily hospitalization counts."""

from .model import (
    StateVector,
    SihrParams,
    BkParams,
    BlackKarasinski,
    OrnsteinUhlenbeck,
    BrownianMotion,
    GeometricBrownianMotion,
    Trajectory,
    sihr_derivatives,
    euler_step,
    bk_exact_step,
    driver_step,
    advance_log_beta,
    simulate_trajectory,
)
from .observation import (
    NegativeBinomial,
    Poisson,
    log_observation_density,
    sample_observation,
)
from .logdomain import (
    ParticleDegeneracyError,
    log_sum_exp_scan,
    normalize_log_weights,
    systematic_resample_log,
    effective_sample_size,
)
from .priors import Uniform, Beta, Normal, Fixed
from .filtering import (
    InitialStatePrior,
    FilterConfig,
    ParticleEnsemble,
    FilterResult,
    run_filter,
    rmse_beta,
)
from .pmcmc import (
    ParamVector,
    PriorSpec,
    Chain,
    PmcmcConfig,
    PmcmcInitError,
    log_prior,
    propose,
    initial_proposal_cov,
    adapt_covariance,
    run_chain,
    chain_summary,
    posterior_mean,
)
from .experiments import (
    SyntheticParams,
    SyntheticDataset,
    RmseRecord,
    RmseGrid,
    ExperimentConfig,
    DECORRELATION_GRID,
    generate_synthetic,
    experiment_decorrelation,
    experiment_misspecification,
    rank_aggregate,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .dataio import (
    DataError,
    HospitalizationSeries,
    load_series,
    write_series,
    write_outputs,
)
from .rng import substream, derive_seed

__version__ = "0.1.0"
