"""Regenerate the bundled flu-season fixture.

The packaged CSV stands in for state-level daily hospital admissions
(the public reporting feed): one flu season, 2022-10-01 through
2023-02-13, region-tagged, Poisson counts.  It is drawn from the
package's own generative model so that integration tests exercise the
fit pipeline on data with a known generating process; the seed below
was picked by scanning for a season-shaped wave (quiet October, surge
peaking mid-December near 150-200 admissions/day, January decline).

Run from the repository root:

    python3 tools/make_sample_data.py
"""

import datetime
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from epismc.dataio import HospitalizationSeries, write_series
from epismc.experiments import SyntheticParams, generate_synthetic
from epismc.observation import Poisson

START = datetime.date(2022, 10, 1)
END = datetime.date(2023, 2, 13)
SEED = 13

PARAMS = SyntheticParams(
    n=7.4e6,            # Arizona-scale population
    i0=600.0,
    gamma=0.01,         # ~1% of infections hospitalized -> ~5% attack rate
    eta=0.25,           # ~4-day hospital stays
    alpha=0.25,
    sigma=0.3,
    lam=1.0 / 35.0,
    mu=-1.2,            # long-run beta ~ 0.3, seasonal-pace growth
    beta0=float(np.exp(-1.2)),
)


def main() -> None:
    days = (END - START).days
    dataset = generate_synthetic(PARAMS, t_end=days, seed=SEED, obs_model=Poisson())
    dates = tuple(START + datetime.timedelta(days=t) for t in range(days + 1))
    series = HospitalizationSeries(
        dates=dates, counts=dataset.observations, region="AZ"
    )
    out = (
        pathlib.Path(__file__).resolve().parents[1]
        / "src" / "epismc" / "data" / "az_flu_2022_2023.csv"
    )
    write_series(series, out)
    print(f"wrote {out} ({len(series)} rows, total {int(series.counts.sum())})")


if __name__ == "__main__":
    main()
