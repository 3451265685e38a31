"""Command-line surface.

Subcommands: simulate (synthetic dataset to files), filter (one filter
run at fixed parameters), fit (pMCMC then a conditional filter run at
the posterior mean), experiment decorrelation | misspec (RMSE sweeps),
summarize (recompute summary.json from a saved chain.csv).  Every
command takes --config PATH plus optional --seed, --out, --np, --iters
overrides.  Exit codes: 0 success, 1 validation/usage error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .config import (
    ConfigError,
    CsvDataBlock,
    RunConfig,
    SyntheticDataBlock,
    load_config,
    with_overrides,
)
from .dataio import (
    DataError,
    load_series,
    write_dataset,
    write_grid,
    write_outputs,
)
from .experiments import (
    DECORRELATION_GRID,
    ExperimentConfig,
    SyntheticParams,
    experiment_decorrelation,
    experiment_misspecification,
    generate_synthetic,
    rank_aggregate,
)
from .filtering import FilterConfig, run_filter
from .model import BlackKarasinski, OrnsteinUhlenbeck
from .observation import NegativeBinomial
from .pmcmc import (
    Chain,
    ParamVector,
    PmcmcConfig,
    chain_summary,
    posterior_mean,
    run_chain,
)
from .rng import derive_seed

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is
    # usage text + exit 1, so raise instead and let cli_main map it.
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the TOML run config")
    parser.add_argument("--seed", type=int, help="override sampler.seed")
    parser.add_argument("--out", help="override output.directory")
    parser.add_argument("--np", type=int, dest="n_particles", help="override sampler.particles")
    parser.add_argument("--iters", type=int, help="override sampler.iterations")


def _build_parser() -> _Parser:
    parser = _Parser(prog="epismc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in (
        ("simulate", "generate a synthetic dataset and write it to files"),
        ("filter", "run the particle filter at the config's fixed parameters"),
        ("fit", "run pMCMC, then a conditional filter at the posterior mean"),
        ("summarize", "recompute summary.json from a saved chain.csv"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    exp = sub.add_parser("experiment", help="run an RMSE sweep")
    exp.add_argument(
        "kind",
        choices=("decorrelation", "misspec"),
        help="matched-rate sweep or full misspecification grid",
    )
    _add_common(exp)
    return parser


def _synthetic_params(cfg: RunConfig) -> SyntheticParams:
    model = cfg.model
    if not isinstance(model.driver, BlackKarasinski):
        raise ConfigError(
            "synthetic generation and the sweeps require model.driver = 'bk'"
        )
    p = model.driver.params
    r = model.obs_model.r if isinstance(model.obs_model, NegativeBinomial) else 100.0
    return SyntheticParams(
        n=model.sihr.n,
        beta0=model.beta0,
        i0=model.i0,
        gamma=model.sihr.gamma,
        eta=model.sihr.eta,
        alpha=model.sihr.alpha,
        sigma=p.sigma,
        lam=p.lam,
        mu=p.mu,
        r=r,
    )


def _theta_from_model(cfg: RunConfig) -> ParamVector:
    model = cfg.model
    driver = model.driver
    if isinstance(driver, (BlackKarasinski,)):
        lam, mu, sigma = driver.params.lam, driver.params.mu, driver.params.sigma
    elif isinstance(driver, OrnsteinUhlenbeck):
        lam, mu, sigma = driver.lam, driver.mu, driver.sigma
    else:
        lam, mu, sigma = 1.0, 0.0, 0.0  # unused for bm/gbm drivers
    phi = (
        1.0 / model.obs_model.r
        if isinstance(model.obs_model, NegativeBinomial)
        else None
    )
    return ParamVector(eta=model.sihr.eta, lam=lam, mu=mu, sigma=sigma, phi=phi)


def _observations(cfg: RunConfig) -> np.ndarray:
    data = cfg.data
    if isinstance(data, SyntheticDataBlock):
        dataset = generate_synthetic(
            _synthetic_params(cfg),
            t_end=data.t_end,
            seed=data.seed,
            dt=cfg.model.dt,
            substeps=cfg.model.substeps,
            obs_model=cfg.model.obs_model,
        )
        return dataset.observations
    series = load_series(
        data.path,
        date_column=data.date_column,
        count_column=data.count_column,
        date_range=(data.start, data.end),
    )
    return series.counts


def _filter_config(cfg: RunConfig, keep_history: bool) -> FilterConfig:
    return FilterConfig(
        n_particles=cfg.sampler.particles,
        sihr=cfg.model.sihr,
        driver=cfg.model.driver,
        obs_model=cfg.model.obs_model,
        init=cfg.init,
        dt=cfg.model.dt,
        substeps=cfg.model.substeps,
        keep_history=keep_history,
    )


def _cmd_simulate(cfg: RunConfig) -> int:
    if not isinstance(cfg.data, SyntheticDataBlock):
        raise ConfigError("simulate requires data.source = 'synthetic'")
    dataset = generate_synthetic(
        _synthetic_params(cfg),
        t_end=cfg.data.t_end,
        seed=cfg.data.seed,
        dt=cfg.model.dt,
        substeps=cfg.model.substeps,
        obs_model=cfg.model.obs_model,
    )
    write_dataset(cfg.output.directory, dataset, cfg.raw_text, cfg.data.seed)
    print(f"wrote dataset.csv and manifest.json to {cfg.output.directory}")
    return 0


def _cmd_filter(cfg: RunConfig) -> int:
    y = _observations(cfg)
    result = run_filter(
        y, _theta_from_model(cfg), _filter_config(cfg, keep_history=True),
        cfg.sampler.seed,
    )
    if result.degenerate_at is not None:
        raise RuntimeError(
            f"particle filter degenerated at t = {result.degenerate_at}; "
            "all particles were impossible under the data"
        )
    write_outputs(
        cfg.output.directory,
        filter_result=result,
        config_text=cfg.raw_text,
        seed=cfg.sampler.seed,
    )
    print(
        f"log-likelihood {result.log_likelihood:.6f}; wrote bands.csv, "
        f"summary.json, manifest.json to {cfg.output.directory}"
    )
    return 0


def _cmd_fit(cfg: RunConfig) -> int:
    if cfg.priors is None:
        raise ConfigError("fit requires a [priors] block")
    if cfg.sampler.iterations is None or cfg.sampler.burn_in is None:
        raise ConfigError("fit requires sampler.iterations and sampler.burn_in")
    y = _observations(cfg)
    pconf = PmcmcConfig(
        iterations=cfg.sampler.iterations,
        burn_in=cfg.sampler.burn_in,
        filter=_filter_config(cfg, keep_history=False),
    )
    chain = run_chain(y, cfg.priors, pconf, cfg.sampler.seed)
    theta_hat = posterior_mean(chain, cfg.sampler.burn_in)
    conditional = run_filter(
        y,
        theta_hat,
        _filter_config(cfg, keep_history=True),
        derive_seed(cfg.sampler.seed, 5),
    )
    write_outputs(
        cfg.output.directory,
        chain=chain,
        filter_result=conditional,
        config_text=cfg.raw_text,
        seed=cfg.sampler.seed,
        burn_in_discard=cfg.sampler.burn_in,
    )
    summary = chain_summary(chain, cfg.sampler.burn_in)
    means = ", ".join(
        f"{name}={summary['params'][name]['mean']:.4g}" for name in chain.names
    )
    print(
        f"acceptance {summary['acceptance_rate']:.3f}; posterior means: {means}; "
        f"wrote chain.csv, summary.json, bands.csv, manifest.json to "
        f"{cfg.output.directory}"
    )
    return 0


def _cmd_experiment(cfg: RunConfig, kind: str) -> int:
    if not isinstance(cfg.data, SyntheticDataBlock):
        raise ConfigError("experiments run on synthetic data only")
    block = cfg.experiment
    if block is None:
        raise ConfigError("an [experiment] block is required")
    econf = ExperimentConfig(
        n_particles=cfg.sampler.particles,
        t_end=cfg.data.t_end,
        dt=cfg.model.dt,
        substeps=cfg.model.substeps,
        params=_synthetic_params(cfg),
    )
    seed = cfg.sampler.seed
    if kind == "decorrelation":
        if block.decorrelation_days is None:
            raise ConfigError("experiment.decorrelation_days is required")
        grid = experiment_decorrelation(
            block.decorrelation_days, block.replicates, econf, seed
        )
        write_grid(cfg.output.directory, grid, None, cfg.raw_text, seed)
        print(
            f"wrote rmse_grid.csv ({len(grid)} rows) and manifest.json to "
            f"{cfg.output.directory}"
        )
    else:
        tdays = block.true_days or DECORRELATION_GRID
        fdays = block.filter_days or DECORRELATION_GRID
        grid = experiment_misspecification(
            tdays, fdays, block.replicates, econf, seed
        )
        ranks = rank_aggregate(grid)
        write_grid(cfg.output.directory, grid, ranks, cfg.raw_text, seed)
        best = min(ranks, key=ranks.get)
        print(
            f"wrote rmse_grid.csv ({len(grid)} rows), mean_ranks.csv "
            f"(best mean rank at 1/lambda = {best}), manifest.json to "
            f"{cfg.output.directory}"
        )
    return 0


def _cmd_summarize(cfg: RunConfig) -> int:
    chain_path = Path(cfg.output.directory) / "chain.csv"
    if not chain_path.exists():
        raise DataError(f"no chain.csv found in {cfg.output.directory}")
    with open(chain_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "iteration" or header[-2:] != ["log_post", "accepted"]:
            raise DataError(f"{chain_path} does not look like a chain table")
        names = tuple(header[1:-2])
        draws, log_posts, accepted = [], [], []
        for row in reader:
            draws.append([float(v) for v in row[1:-2]])
            log_posts.append(float(row[-2]))
            accepted.append(bool(int(row[-1])))
    if not draws:
        raise DataError(f"{chain_path} holds no draws")
    chain = Chain(
        names=names,
        draws=np.asarray(draws),
        log_posts=np.asarray(log_posts),
        accepted=np.asarray(accepted, dtype=bool),
        proposal_cov_history=[],
        initial=np.asarray(draws[0]),
    )
    discard = min(cfg.sampler.burn_in or 0, chain.draws.shape[0] - 1)
    summary = chain_summary(chain, discard)
    out_path = Path(cfg.output.directory) / "summary.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"chain": summary}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"chain": summary}, indent=2, sort_keys=True))
    return 0


def cli_main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(
            cfg,
            seed=args.seed,
            out_dir=args.out,
            particles=args.n_particles,
            iterations=args.iters,
        )
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "filter":
            return _cmd_filter(cfg)
        if args.command == "fit":
            return _cmd_fit(cfg)
        if args.command == "experiment":
            return _cmd_experiment(cfg, args.kind)
        return _cmd_summarize(cfg)
    except (ConfigError, DataError, FileNotFoundError) as e:
        print(f"epismc: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures: degeneracy, init retries, I/O
        print(f"epismc: runtime failure: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
