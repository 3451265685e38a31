"""Run configuration: one TOML file is the single source of truth.

Every run is described by a [model] block (population, rates, driver,
observation model), optional [priors] (+ [priors.init]) and [sampler]
blocks for fitting, a [data] block (synthetic spec or CSV source), an
optional [experiment] block for the sweeps, and an [output] block.
Validation is eager and field-precise: the first offending key is
reported by its full path.  CLI flags can override the seed, output
directory, particle count, and iteration count.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .filtering import InitialStatePrior
from .model import (
    BkParams,
    BlackKarasinski,
    BrownianMotion,
    DriverKind,
    GeometricBrownianMotion,
    OrnsteinUhlenbeck,
    SihrParams,
)
from .observation import NegativeBinomial, ObservationModel, Poisson
from .pmcmc import PriorSpec
from .priors import Beta, Fixed, Normal, PriorDist, Uniform

__all__ = [
    "ConfigError",
    "ModelBlock",
    "SamplerBlock",
    "SyntheticDataBlock",
    "CsvDataBlock",
    "ExperimentBlock",
    "OutputBlock",
    "RunConfig",
    "load_config",
    "parse_config",
    "with_overrides",
]


class ConfigError(ValueError):
    """A configuration value is missing, ill-typed, or out of range."""


@dataclass(frozen=True)
class ModelBlock:
    sihr: SihrParams
    driver: DriverKind
    obs_model: ObservationModel
    beta0: float
    i0: float
    dt: float
    substeps: int


@dataclass(frozen=True)
class SamplerBlock:
    particles: int = 300
    seed: int = 1
    iterations: Optional[int] = None
    burn_in: Optional[int] = None


@dataclass(frozen=True)
class SyntheticDataBlock:
    t_end: float = 250.0
    seed: int = 0


@dataclass(frozen=True)
class CsvDataBlock:
    path: str
    date_column: str = "date"
    count_column: str = "count"
    start: Optional[datetime.date] = None
    end: Optional[datetime.date] = None


@dataclass(frozen=True)
class ExperimentBlock:
    replicates: int = 10
    decorrelation_days: Optional[Tuple[int, ...]] = None
    true_days: Optional[Tuple[int, ...]] = None
    filter_days: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    data: Union[SyntheticDataBlock, CsvDataBlock]
    output: OutputBlock
    sampler: SamplerBlock
    priors: Optional[PriorSpec]
    init: InitialStatePrior
    experiment: Optional[ExperimentBlock]
    raw_text: str


def _get(table: dict, key: str, kinds, path: str, default=...):
    if key not in table:
        if default is not ...:
            return default
        raise ConfigError(f"{path}.{key} is required")
    value = table[key]
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kinds) or isinstance(value, bool) and kinds is not bool:
        raise ConfigError(
            f"{path}.{key} must be of type {getattr(kinds, '__name__', kinds)} "
            f"(got {value!r})"
        )
    return value


def _positive(value, path_key: str):
    if not value > 0:
        raise ConfigError(f"{path_key} must be > 0 (got {value})")
    return value


def _nonneg(value, path_key: str):
    if value < 0:
        raise ConfigError(f"{path_key} must be >= 0 (got {value})")
    return value


def _known_keys(table: dict, allowed, path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}.{key} is not a recognized key")


def _parse_driver(table: dict, path: str) -> DriverKind:
    kind = _get(table, "driver", str, path, default="bk")
    if kind == "bk":
        lam = _positive(_get(table, "lambda", float, path), f"{path}.lambda")
        mu = _get(table, "mu", float, path)
        sigma = _nonneg(_get(table, "sigma", float, path), f"{path}.sigma")
        return BlackKarasinski(BkParams(lam=lam, mu=mu, sigma=sigma))
    if kind == "ou":
        lam = _positive(_get(table, "lambda", float, path), f"{path}.lambda")
        mu = _get(table, "mu", float, path)
        sigma = _nonneg(_get(table, "sigma", float, path), f"{path}.sigma")
        return OrnsteinUhlenbeck(lam=lam, mu=mu, sigma=sigma)
    if kind in ("bm", "gbm"):
        drift = _get(table, "drift", float, path, default=0.0)
        vol = _nonneg(_get(table, "volatility", float, path), f"{path}.volatility")
        cls = BrownianMotion if kind == "bm" else GeometricBrownianMotion
        return cls(drift=drift, volatility=vol)
    raise ConfigError(f"{path}.driver must be one of bk, ou, bm, gbm (got {kind!r})")


def _parse_model(table: dict, path: str = "model") -> ModelBlock:
    _known_keys(
        table,
        {
            "population",
            "alpha",
            "gamma",
            "eta",
            "dt",
            "substeps",
            "driver",
            "lambda",
            "mu",
            "sigma",
            "drift",
            "volatility",
            "obs",
            "r",
            "beta0",
            "i0",
        },
        path,
    )
    n = _positive(_get(table, "population", float, path), f"{path}.population")
    alpha = _positive(_get(table, "alpha", float, path), f"{path}.alpha")
    gamma = _get(table, "gamma", float, path)
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"{path}.gamma must be in [0, 1] (got {gamma})")
    eta = _positive(_get(table, "eta", float, path), f"{path}.eta")
    dt = _positive(_get(table, "dt", float, path, default=1.0), f"{path}.dt")
    substeps = _get(table, "substeps", int, path, default=10)
    if substeps < 1:
        raise ConfigError(f"{path}.substeps must be >= 1 (got {substeps})")
    driver = _parse_driver(table, path)
    obs_kind = _get(table, "obs", str, path, default="nb")
    if obs_kind == "nb":
        r = _positive(_get(table, "r", float, path), f"{path}.r")
        obs: ObservationModel = NegativeBinomial(r=r)
    elif obs_kind == "poisson":
        if "r" in table:
            raise ConfigError(f"{path}.r is meaningless under obs = 'poisson'")
        obs = Poisson()
    else:
        raise ConfigError(f"{path}.obs must be 'nb' or 'poisson' (got {obs_kind!r})")
    beta0 = _positive(_get(table, "beta0", float, path, default=0.4), f"{path}.beta0")
    i0 = _nonneg(_get(table, "i0", float, path, default=100.0), f"{path}.i0")
    if i0 > n:
        raise ConfigError(f"{path}.i0 must not exceed the population (got {i0})")
    return ModelBlock(
        sihr=SihrParams(n=n, alpha=alpha, gamma=gamma, eta=eta),
        driver=driver,
        obs_model=obs,
        beta0=beta0,
        i0=i0,
        dt=dt,
        substeps=substeps,
    )


def _parse_prior(entry, path: str) -> PriorDist:
    if not isinstance(entry, dict):
        raise ConfigError(f"{path} must be a table like {{dist = 'uniform', ...}}")
    dist = _get(entry, "dist", str, path)
    if dist == "uniform":
        lo = _get(entry, "lo", float, path)
        hi = _get(entry, "hi", float, path)
        if not hi > lo:
            raise ConfigError(f"{path} needs hi > lo (got lo={lo}, hi={hi})")
        return Uniform(lo, hi)
    if dist == "beta":
        a = _positive(_get(entry, "a", float, path), f"{path}.a")
        b = _positive(_get(entry, "b", float, path), f"{path}.b")
        return Beta(a, b)
    if dist == "normal":
        mean = _get(entry, "mean", float, path)
        sd = _positive(_get(entry, "sd", float, path), f"{path}.sd")
        return Normal(mean, sd)
    if dist == "fixed":
        return Fixed(_get(entry, "value", float, path))
    raise ConfigError(
        f"{path}.dist must be one of uniform, beta, normal, fixed (got {dist!r})"
    )


def _parse_priors(
    table: dict, obs_model: ObservationModel, path: str = "priors"
) -> Tuple[PriorSpec, InitialStatePrior]:
    _known_keys(
        table, {"eta", "lambda", "mu", "sigma", "phi", "init"}, path
    )
    spec_args = {}
    for name, key in (("eta", "eta"), ("lam", "lambda"), ("mu", "mu"), ("sigma", "sigma")):
        if key not in table:
            raise ConfigError(f"{path}.{key} is required")
        spec_args[name] = _parse_prior(table[key], f"{path}.{key}")
    if isinstance(obs_model, NegativeBinomial):
        if "phi" not in table:
            raise ConfigError(
                f"{path}.phi is required when model.obs = 'nb' (phi = 1/r)"
            )
        spec_args["phi"] = _parse_prior(table["phi"], f"{path}.phi")
    elif "phi" in table:
        raise ConfigError(f"{path}.phi is meaningless under model.obs = 'poisson'")
    init = _parse_init(table.get("init", {}), f"{path}.init")
    return PriorSpec(**spec_args), init


def _parse_init(table: dict, path: str) -> InitialStatePrior:
    _known_keys(table, {"i0", "beta0"}, path)
    if "i0" in table:
        i0 = _parse_prior(table["i0"], f"{path}.i0")
    else:
        i0 = Uniform(0.0, 1000.0)
    if "beta0" in table:
        entry = table["beta0"]
        if isinstance(entry, dict) and entry.get("dist") == "stationary":
            return InitialStatePrior(i0=i0, beta0=None)
        return InitialStatePrior(i0=i0, beta0=_parse_prior(entry, f"{path}.beta0"))
    return InitialStatePrior(i0=i0, beta0=Uniform(0.0, 1.0))


def _parse_date(value, path_key: str) -> datetime.date:
    if isinstance(value, datetime.date) and not isinstance(value, datetime.datetime):
        return value
    if isinstance(value, str):
        try:
            return datetime.date.fromisoformat(value)
        except ValueError:
            pass
    raise ConfigError(f"{path_key} must be an ISO date like 2022-10-01 (got {value!r})")


def _parse_data(table: dict, base_dir: Path, path: str = "data"):
    source = _get(table, "source", str, path, default="synthetic")
    if source == "synthetic":
        _known_keys(table, {"source", "t_end", "seed"}, path)
        t_end = _positive(
            _get(table, "t_end", float, path, default=250.0), f"{path}.t_end"
        )
        seed = _get(table, "seed", int, path, default=0)
        return SyntheticDataBlock(t_end=t_end, seed=seed)
    if source == "csv":
        _known_keys(
            table,
            {"source", "path", "date_column", "count_column", "start", "end"},
            path,
        )
        raw = _get(table, "path", str, path)
        resolved = Path(raw)
        if not resolved.is_absolute():
            resolved = base_dir / resolved
        if not resolved.exists():
            raise ConfigError(f"{path}.path does not exist: {resolved}")
        start = table.get("start")
        end = table.get("end")
        return CsvDataBlock(
            path=str(resolved),
            date_column=_get(table, "date_column", str, path, default="date"),
            count_column=_get(table, "count_column", str, path, default="count"),
            start=None if start is None else _parse_date(start, f"{path}.start"),
            end=None if end is None else _parse_date(end, f"{path}.end"),
        )
    raise ConfigError(f"{path}.source must be 'synthetic' or 'csv' (got {source!r})")


def _parse_sampler(table: dict, path: str = "sampler") -> SamplerBlock:
    _known_keys(table, {"particles", "seed", "iterations", "burn_in"}, path)
    particles = _get(table, "particles", int, path, default=300)
    if particles < 2:
        raise ConfigError(f"{path}.particles must be >= 2 (got {particles})")
    seed = _get(table, "seed", int, path, default=1)
    iterations = _get(table, "iterations", int, path, default=None)
    burn_in = _get(table, "burn_in", int, path, default=None)
    if iterations is not None and iterations < 2:
        raise ConfigError(f"{path}.iterations must be >= 2 (got {iterations})")
    if burn_in is not None and burn_in < 1:
        raise ConfigError(f"{path}.burn_in must be >= 1 (got {burn_in})")
    if iterations is not None and burn_in is not None and iterations <= burn_in:
        raise ConfigError(
            f"{path}.iterations must exceed {path}.burn_in "
            f"(got {iterations} <= {burn_in})"
        )
    return SamplerBlock(
        particles=particles, seed=seed, iterations=iterations, burn_in=burn_in
    )


def _parse_days(value, path_key: str) -> Tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path_key} must be a non-empty array of whole days")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{path_key} entries must be integers >= 1 (got {v!r})")
        out.append(v)
    if len(set(out)) != len(out):
        raise ConfigError(f"{path_key} contains duplicates")
    return tuple(out)


def _parse_experiment(table: dict, path: str = "experiment") -> ExperimentBlock:
    _known_keys(
        table, {"replicates", "decorrelation_days", "true_days", "filter_days"}, path
    )
    replicates = _get(table, "replicates", int, path, default=10)
    if replicates < 1:
        raise ConfigError(f"{path}.replicates must be >= 1 (got {replicates})")
    days = table.get("decorrelation_days")
    tdays = table.get("true_days")
    fdays = table.get("filter_days")
    return ExperimentBlock(
        replicates=replicates,
        decorrelation_days=(
            None if days is None else _parse_days(days, f"{path}.decorrelation_days")
        ),
        true_days=None if tdays is None else _parse_days(tdays, f"{path}.true_days"),
        filter_days=None if fdays is None else _parse_days(fdays, f"{path}.filter_days"),
    )


def parse_config(text: str, base_dir: Union[str, Path] = ".") -> RunConfig:
    """Parse and validate a TOML config; base_dir anchors relative paths."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e
    _known_keys(
        doc, {"model", "priors", "sampler", "data", "output", "experiment"}, "config"
    )
    if "model" not in doc:
        raise ConfigError("a [model] block is required")
    model = _parse_model(doc["model"])
    data = _parse_data(doc.get("data", {}), Path(base_dir))
    sampler = _parse_sampler(doc.get("sampler", {}))
    if "priors" in doc:
        priors, init = _parse_priors(doc["priors"], model.obs_model)
    else:
        priors, init = None, _parse_init({}, "priors.init")
    experiment = _parse_experiment(doc["experiment"]) if "experiment" in doc else None
    out_table = doc.get("output", {})
    _known_keys(out_table, {"directory"}, "output")
    output = OutputBlock(
        directory=_get(out_table, "directory", str, "output", default="out")
    )
    return RunConfig(
        model=model,
        data=data,
        output=output,
        sampler=sampler,
        priors=priors,
        init=init,
        experiment=experiment,
        raw_text=text,
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read, parse, and validate the TOML file at path."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def with_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
    particles: Optional[int] = None,
    iterations: Optional[int] = None,
) -> RunConfig:
    """Apply CLI flag overrides on top of a parsed config."""
    sampler = config.sampler
    if seed is not None:
        sampler = replace(sampler, seed=seed)
    if particles is not None:
        if particles < 2:
            raise ConfigError(f"--np must be >= 2 (got {particles})")
        sampler = replace(sampler, particles=particles)
    if iterations is not None:
        if iterations < 2:
            raise ConfigError(f"--iters must be >= 2 (got {iterations})")
        sampler = replace(sampler, iterations=iterations)
    output = config.output if out_dir is None else OutputBlock(directory=out_dir)
    return replace(config, sampler=sampler, output=output)
