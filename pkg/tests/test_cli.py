"""End-to-end command-line runs and exit-code mapping."""

import json

import numpy as np
import pytest

from epismc.cli import cli_main


def _config(tmp_path, body, name="run.toml"):
    p = tmp_path / name
    p.write_text(body, encoding="utf-8")
    return str(p)


def _base(out_dir, t_end=30.0, extra=""):
    return f"""
[model]
population = 1e5
alpha = 0.14285714285714285
gamma = 0.001
eta = 0.1
beta0 = 0.35
i0 = 100.0
driver = "bk"
lambda = 0.1
mu = -1.1
sigma = 0.2
obs = "nb"
r = 100.0

[sampler]
particles = 60
seed = 7

[data]
source = "synthetic"
t_end = {t_end}
seed = 3

[output]
directory = "{out_dir}"
{extra}
"""


PRIORS = """
[priors]
eta = {dist = "uniform", lo = 0.0, hi = 1.0}
lambda = {dist = "fixed", value = 0.1}
mu = {dist = "fixed", value = -1.1}
sigma = {dist = "fixed", value = 0.2}
phi = {dist = "fixed", value = 0.01}
"""


def test_no_command_is_usage_error(capsys):
    assert cli_main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert cli_main(["simulate", "--config", "x.toml", "--bogus"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "--bogus" in err


def test_missing_config_file(tmp_path, capsys):
    assert cli_main(["simulate", "--config", str(tmp_path / "none.toml")]) == 1
    assert "error" in capsys.readouterr().err


def test_invalid_config_rejected(tmp_path, capsys):
    cfg = _config(tmp_path, "[model]\npopulation = -5\n")
    assert cli_main(["simulate", "--config", cfg]) == 1
    assert "population" in capsys.readouterr().err


def test_simulate_writes_dataset(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _config(tmp_path, _base(out))
    assert cli_main(["simulate", "--config", cfg]) == 0
    assert "dataset.csv" in capsys.readouterr().out
    lines = (out / "dataset.csv").read_text().splitlines()
    assert lines[0] == "t,s,i,h,r,beta,y"
    assert len(lines) - 1 == 31
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3

    # same config, second directory: byte-identical dataset
    out2 = tmp_path / "out2"
    assert cli_main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    assert (out / "dataset.csv").read_bytes() == (out2 / "dataset.csv").read_bytes()


def test_simulate_needs_synthetic_source(tmp_path, capsys):
    (tmp_path / "h.csv").write_text("date,count\n2023-01-01,1\n")
    body = _base(tmp_path / "out").replace(
        'source = "synthetic"\nt_end = 30.0\nseed = 3',
        'source = "csv"\npath = "h.csv"',
    )
    cfg = _config(tmp_path, body)
    assert cli_main(["simulate", "--config", cfg]) == 1
    assert "synthetic" in capsys.readouterr().err


def test_filter_writes_bands_and_summary(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _config(tmp_path, _base(out))
    assert cli_main(["filter", "--config", cfg]) == 0
    assert "log-likelihood" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert np.isfinite(summary["filter"]["log_likelihood"])
    assert summary["filter"]["degenerate_at"] is None
    bands = (out / "bands.csv").read_text().splitlines()
    assert len(bands) - 1 == 31 * 5


def test_filter_seed_override_changes_result(tmp_path):
    out_a, out_b, out_c = (tmp_path / d for d in ("a", "b", "c"))
    cfg = _config(tmp_path, _base(out_a))
    assert cli_main(["filter", "--config", cfg]) == 0
    assert cli_main(["filter", "--config", cfg, "--out", str(out_b)]) == 0
    assert cli_main(
        ["filter", "--config", cfg, "--out", str(out_c), "--seed", "8"]
    ) == 0
    ll = lambda d: json.loads((d / "summary.json").read_text())["filter"]["log_likelihood"]
    assert ll(out_a) == ll(out_b)
    assert ll(out_a) != ll(out_c)


def test_filter_degeneracy_is_runtime_failure(tmp_path, capsys):
    # an impossible init (zero infected, zero prior mass elsewhere) makes
    # every particle miss the first positive count
    out = tmp_path / "out"
    extra = PRIORS + '\n[priors.init]\ni0 = {dist = "fixed", value = 0.0}\n'
    cfg = _config(tmp_path, _base(out, extra=extra))
    assert cli_main(["filter", "--config", cfg]) == 2
    assert "degenerated" in capsys.readouterr().err


def test_fit_smoke(tmp_path, capsys):
    out = tmp_path / "out"
    body = _base(out, t_end=25.0, extra=PRIORS).replace(
        "particles = 60\nseed = 7",
        "particles = 60\nseed = 7\niterations = 150\nburn_in = 30",
    )
    cfg = _config(tmp_path, body)
    assert cli_main(["fit", "--config", cfg]) == 0
    assert "acceptance" in capsys.readouterr().out
    for name in ("chain.csv", "bands.csv", "summary.json", "manifest.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["chain"]["n_retained"] == 120
    assert 0.0 < summary["chain"]["acceptance_rate"] <= 1.0
    assert 0.0 <= summary["chain"]["params"]["eta"]["mean"] <= 1.0
    rows = (out / "chain.csv").read_text().splitlines()
    assert len(rows) - 1 == 150


def test_fit_requires_priors(tmp_path, capsys):
    body = _base(tmp_path / "out").replace(
        "particles = 60\nseed = 7",
        "particles = 60\nseed = 7\niterations = 50\nburn_in = 10",
    )
    cfg = _config(tmp_path, body)
    assert cli_main(["fit", "--config", cfg]) == 1
    assert "priors" in capsys.readouterr().err


def test_fit_requires_iterations(tmp_path, capsys):
    cfg = _config(tmp_path, _base(tmp_path / "out", extra=PRIORS))
    assert cli_main(["fit", "--config", cfg]) == 1
    assert "iterations" in capsys.readouterr().err


def test_summarize_recomputes_summary(tmp_path, capsys):
    out = tmp_path / "out"
    body = _base(out, t_end=25.0, extra=PRIORS).replace(
        "particles = 60\nseed = 7",
        "particles = 60\nseed = 7\niterations = 60\nburn_in = 12",
    )
    cfg = _config(tmp_path, body)
    assert cli_main(["fit", "--config", cfg]) == 0
    before = json.loads((out / "summary.json").read_text())["chain"]
    (out / "summary.json").unlink()
    capsys.readouterr()
    assert cli_main(["summarize", "--config", cfg]) == 0
    printed = json.loads(capsys.readouterr().out)
    after = json.loads((out / "summary.json").read_text())["chain"]
    assert printed["chain"] == after
    assert after["n_retained"] == before["n_retained"]
    assert after["acceptance_rate"] == pytest.approx(before["acceptance_rate"])
    assert after["params"]["eta"]["mean"] == pytest.approx(
        before["params"]["eta"]["mean"]
    )


def test_summarize_without_chain(tmp_path, capsys):
    out = tmp_path / "empty"
    out.mkdir()
    cfg = _config(tmp_path, _base(out))
    assert cli_main(["summarize", "--config", cfg]) == 1
    assert "chain.csv" in capsys.readouterr().err


def test_experiment_decorrelation(tmp_path, capsys):
    out = tmp_path / "out"
    extra = "\n[experiment]\ndecorrelation_days = [7, 14]\nreplicates = 2\n"
    cfg = _config(tmp_path, _base(out, extra=extra))
    assert cli_main(["experiment", "decorrelation", "--config", cfg]) == 0
    assert "rmse_grid.csv" in capsys.readouterr().out
    lines = (out / "rmse_grid.csv").read_text().splitlines()
    assert len(lines) - 1 == 4
    assert not (out / "mean_ranks.csv").exists()


def test_experiment_misspec(tmp_path, capsys):
    out = tmp_path / "out"
    extra = (
        "\n[experiment]\ntrue_days = [7, 14]\nfilter_days = [7, 14]\n"
        "replicates = 1\n"
    )
    cfg = _config(tmp_path, _base(out, extra=extra))
    assert cli_main(["experiment", "misspec", "--config", cfg]) == 0
    assert "mean_ranks.csv" in capsys.readouterr().out
    lines = (out / "rmse_grid.csv").read_text().splitlines()
    assert len(lines) - 1 == 4
    ranks = (out / "mean_ranks.csv").read_text().splitlines()
    assert [int(l.split(",")[0]) for l in ranks[1:]] == [7, 14]


def test_experiment_requires_block(tmp_path, capsys):
    cfg = _config(tmp_path, _base(tmp_path / "out"))
    assert cli_main(["experiment", "decorrelation", "--config", cfg]) == 1
    assert "experiment" in capsys.readouterr().err


def test_experiment_kind_is_validated(capsys):
    assert cli_main(["experiment", "nope", "--config", "x.toml"]) == 1
    assert "usage" in capsys.readouterr().err
