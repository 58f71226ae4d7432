import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from hypothesis import given
from hypothesis import strategies as st

from artifact import __version__
from artifact.abm import Combined, DependencyCap, DiversityCap, SpeedBump
from artifact.bands import Band, band, check, load_bands
from artifact.cli import main
from artifact.config import load_config
from artifact.errors import ConfigError, UnknownKey
from artifact.experiments import ExperimentSpec, run_experiment
from artifact.io import cells_table, fmt_value, run_hash, to_jsonable, write_report
from artifact.params import ModelParams

SMALL_RUN = """\
experiment = interventions
seeds = 2
n_periods = 300
option.arms = DependencyCap(0.7)
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- config

def test_empty_config_gives_calibrated_defaults(tmp_path):
    params, spec = load_config(write(tmp_path, "# nothing set\n\n"))
    assert (params.sigma_v, params.rho, params.beta, params.kappa, params.lambda_jump) == \
        (0.108, 0.6, 0.3, 0.02, 0.016)
    assert spec.kind == "calibration" and spec.seeds == 20 and spec.master_seed == 0


@pytest.mark.parametrize("line", ["beta = 1.0", "theta = 1.5", "phi = -0.1", "seeds = 0",
                                  "jobs = 0", "experiment = nope", "horizon = medium",
                                  "rho = abc", "phi = 0.5\nphi = 0.6", "just text"])
def test_invalid_config_raises(tmp_path, line):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, line + "\n"))


def test_unknown_key_is_rejected(tmp_path):
    with pytest.raises(UnknownKey):
        load_config(write(tmp_path, "bta = 0.3\n"))
    with pytest.raises(UnknownKey):
        load_config(write(tmp_path, "axis.nope = 1, 2\n"))


def test_axes_options_and_overrides(tmp_path):
    text = ("experiment = tail-grid\naxis.phi = 0.1, 0.9\nrho = 0.5  # inline comment\n"
            "option.arms = DiversityCap(0.5), SpeedBump(5), Combined\noption.peak = 1.2\n"
            "horizon = reduced\n")
    params, spec = load_config(write(tmp_path, text), {"seed": 7, "jobs": None})
    assert spec.axes == {"phi": (0.1, 0.9)}
    assert params.rho == 0.5 and params.n_periods == 1260
    assert spec.options["arms"] == (DiversityCap(0.5), SpeedBump(5), Combined())
    assert spec.options["peak"] == 1.2
    assert spec.master_seed == 7 and spec.jobs == 1


def test_bad_arm_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "option.arms = Teleport(3)\n"))


def test_run_hash_ignores_master_seed_but_not_params():
    a = ExperimentSpec("calibration", master_seed=1)
    assert run_hash(a) == run_hash(ExperimentSpec("calibration", master_seed=2))
    assert run_hash(a) != run_hash(ExperimentSpec("calibration", base=ModelParams(rho=0.5)))
    assert len(run_hash(a)) == 16


# ---------------------------------------------------------------- bands and io

def test_bands_file():
    blob = load_bands()
    assert band("calibration.ann_vol") == Band(0.14, 0.22)
    assert band("calm-storm.vol_ratio").label() == "<= 1.15"
    assert check("x", "hysteresis.ratio", 1.6) == ("x > 1.5", True)
    assert not band("calibration.kurtosis").contains(math.nan)
    assert len(blob) >= 17
    with pytest.raises(KeyError):
        band("no.such.band")


def test_open_and_closed_edges():
    b = Band(0.0, 1.0, lo_open=True)
    assert not b.contains(0.0) and b.contains(1.0)
    assert b.label() == "in (0, 1]"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_fields_round_trip_exactly(x):
    assert float(fmt_value(x)) == x


def test_fmt_value_special_cases():
    assert [fmt_value(v) for v in (None, True, np.int64(3), math.nan, -math.inf)] == \
        ["", "true", "3", "nan", "-inf"]
    assert fmt_value([1, 2.5]) == "[1, 2.5]"
    assert to_jsonable({"a": math.nan, "b": (1, np.float64(2.0))}) == {"a": None, "b": [1, 2.0]}


def test_write_report_layout(tmp_path):
    spec = ExperimentSpec("calibration", base=ModelParams(n_periods=300), seeds=2, master_seed=3)
    rep = run_experiment(spec)
    out = write_report(rep, spec, tmp_path, horizon="custom")
    assert out.name == f"calibration-{run_hash(spec)}-s3"
    assert sorted(p.name for p in out.iterdir()) == ["cells.csv", "manifest.json", "summary.json",
                                                     "table.txt"]
    rows = list(csv.reader((out / "cells.csv").open()))
    header, _ = cells_table(rep, run_hash(spec), 3)
    assert rows[0] == header and len(rows) == 3
    assert rows[1][:3] == [run_hash(spec), "3", "0"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["all_checks_passed"] == rep.passed()
    assert "created" not in summary
    assert json.loads((out / "manifest.json").read_text())["package_version"] == __version__


# ---------------------------------------------------------------- cli

def test_cli_version_and_listing():
    r = CliRunner()
    assert __version__ in r.invoke(main, ["--version"]).output
    out = r.invoke(main, ["list-experiments"]).output
    assert out.split()[0] == "calibration" and "calm-storm" in out


def test_cli_config_errors_exit_2(tmp_path):
    r = CliRunner()
    for text in ("beta = 1.0\n", "theta = 1.5\n", "typo = 1\n"):
        res = r.invoke(main, ["validate-config", "--config", str(write(tmp_path, text))])
        assert res.exit_code == 2
        res = r.invoke(main, ["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)])
        assert res.exit_code == 2
    res = r.invoke(main, ["run", "--jobs", "0"])
    assert res.exit_code == 2


def test_cli_validate_config_prints_hash(tmp_path):
    path = write(tmp_path, SMALL_RUN)
    res = CliRunner().invoke(main, ["validate-config", "--config", str(path)])
    assert res.exit_code == 0
    _, spec = load_config(path)
    assert f"config_hash={run_hash(spec)}" in res.output


def test_cli_check_analytic(tmp_path):
    r = CliRunner()
    res = r.invoke(main, ["run", "--check-analytic", "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert res.output.count("[PASS]") == 6 and "[FAIL]" not in res.output
    names = sorted(p.name for p in (tmp_path / "check-analytic").iterdir())
    assert "bifurcation-forward.csv" in names and "bifurcation.json" in names
    assert r.invoke(main, ["check-analytic"]).exit_code == 0


def _run_cli(cfg, out, jobs, env=None):
    args = ["run", "--config", str(cfg), "--seed", "42", "--jobs", str(jobs)]
    if out is not None:
        args += ["--out", str(out)]
    res = CliRunner(env=env).invoke(main, args)
    assert res.exit_code == 0, res.output
    (run_dir,) = [p for p in Path(out or env["ARTIFACT_OUT"]).iterdir() if p.is_dir()]
    return run_dir


def test_cli_outputs_are_byte_identical_across_runs_and_jobs(tmp_path):
    cfg = write(tmp_path, SMALL_RUN)
    a = _run_cli(cfg, tmp_path / "a", 1)
    b = _run_cli(cfg, tmp_path / "b", 1)
    c = _run_cli(cfg, tmp_path / "c", 8)
    for name in ("cells.csv", "summary.json", "table.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    assert json.loads((c / "manifest.json").read_text())["jobs"] == 8


def test_cli_output_root_from_environment(tmp_path):
    cfg = write(tmp_path, SMALL_RUN)
    env_dir = tmp_path / "env-root"
    run_dir = _run_cli(cfg, None, 1, env={"ARTIFACT_OUT": str(env_dir)})
    assert run_dir.parent == env_dir and (run_dir / "cells.csv").exists()
