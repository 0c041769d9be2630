import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cct.dataio import DataFormatError, emit_report, load_csv, write_dataset_csv
from cct.harness import (
    ConfigError,
    ExperimentReport,
    aggregate_rows,
    config_from_dict,
    parse_condition,
    parse_config,
    run_experiment,
    splitmix64,
    subseed,
)


# -- seed derivation -------------------------------------------------------------


def test_splitmix64_is_64bit_and_deterministic():
    vals = {splitmix64(i) for i in range(1000)}
    assert len(vals) == 1000
    assert all(0 <= v < 2**64 for v in vals)
    assert splitmix64(42) == splitmix64(42)


def test_subseeds_distinct_across_replications():
    seeds = {subseed(7, r) for r in range(10_000)}
    assert len(seeds) == 10_000


def test_subseed_batches_nearly_independent():
    # metrics from disjoint sub-seed ranges should be uncorrelated
    rng_vals = []
    for r in range(200):
        g = np.random.default_rng(subseed(123, r))
        rng_vals.append(g.standard_normal())
    a = np.array(rng_vals[:100])
    b = np.array(rng_vals[100:])
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.25


# -- config ------------------------------------------------------------------------


def test_parse_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        """
# outlier experiment
procedure = outlier-detect
scenario = a1
n = 400
m = 100
alpha = 0.15
replications = 2
seed = 9
bandwidth = auto
weight_cols = 9
score = cqr
score_k = 25
"""
    )
    cfg = parse_config(str(path))
    assert cfg.procedure == "outlier-detect"
    assert cfg.n == 400
    assert cfg.weight_cols == (9,)
    assert cfg.bandwidth == "auto"
    assert cfg.score_k == 25


def test_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"procedure": "nonsense", "scenario": "a1"})
    with pytest.raises(ConfigError):
        config_from_dict({"procedure": "select", "scenario": "a2", "alpha": "1.5"})
    with pytest.raises(ConfigError):
        config_from_dict({"procedure": "select"})  # no data source
    with pytest.raises(ConfigError):
        config_from_dict({"procedure": "select", "scenario": "a2", "bogus_key": "1"})
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/path.cfg")


def test_parse_condition_masks():
    mask = parse_condition("x0<0&x2>1.5")
    x = np.array([[-1.0, 9.0, 2.0], [-1.0, 9.0, 1.0], [1.0, 9.0, 2.0]])
    assert mask(x).tolist() == [True, False, False]
    with pytest.raises(ConfigError):
        parse_condition("y0<0")
    with pytest.raises(ConfigError):
        parse_condition("x0=0")


# -- experiment runs -----------------------------------------------------------------


def _small_cfg(**over):
    base = {
        "procedure": "two-sample-test",
        "scenario": "a3",
        "hypothesis": "null",
        "n": 120,
        "m": 120,
        "alpha": 0.05,
        "replications": 4,
        "seed": 11,
    }
    base.update(over)
    return config_from_dict({k: str(v) for k, v in base.items()})


def test_run_experiment_deterministic():
    r1 = run_experiment(_small_cfg())
    r2 = run_experiment(_small_cfg())
    assert r1.rows == r2.rows
    assert r1.aggregates == r2.aggregates


def test_run_experiment_thread_count_invariant():
    serial = run_experiment(_small_cfg())
    parallel = run_experiment(_small_cfg(threads=3))
    assert serial.rows == parallel.rows


def test_single_replication_aggregate():
    rep = run_experiment(_small_cfg(replications=1))
    assert len(rep.rows) == 1
    for key, (mean, se) in rep.aggregates.items():
        assert mean == rep.rows[0][key]
        assert se == 0.0


def test_aggregate_recomputable():
    rows = [{"x": 1.0}, {"x": 2.0}, {"x": 4.0}]
    agg = aggregate_rows(rows)
    vals = np.array([1.0, 2.0, 4.0])
    assert agg["x"][0] == pytest.approx(vals.mean())
    assert agg["x"][1] == pytest.approx(vals.std(ddof=1) / np.sqrt(3))


def test_select_and_screen_rows_have_conditional_metrics():
    cfg = config_from_dict(
        {
            "procedure": "select",
            "scenario": "a2",
            "n": "200",
            "m": "200",
            "alpha": "0.2",
            "replications": "2",
            "seed": "5",
            "conditions": "x0<0;x0>0",
            "compare_baseline": "true",
        }
    )
    rep = run_experiment(cfg)
    row = rep.rows[0]
    assert {"pser", "pser[x0<0]", "pser[x0>0]", "pser_thr"} <= set(row)


# -- csv io ------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 3))
    y = rng.standard_normal(20)
    path = tmp_path / "data.csv"
    write_dataset_csv(str(path), x, y)
    ds = load_csv(str(path), ["x0", "x1", "x2"], ["y"])
    assert np.array_equal(ds.covariates, x)  # bitwise via repr round-trip
    assert np.array_equal(ds.responses, y)


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    with pytest.raises(DataFormatError, match="no data rows"):
        load_csv(str(p), ["a"])
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError, match="missing column"):
        load_csv(str(p), ["zz"])
    p.write_text("a,b\n1,x\n")
    with pytest.raises(DataFormatError, match="row 2, column 'b'"):
        load_csv(str(p), ["a", "b"])
    with pytest.raises(DataFormatError):
        load_csv(str(tmp_path / "missing.csv"), ["a"])
    p.write_text("")
    with pytest.raises(DataFormatError, match="empty"):
        load_csv(str(p), ["a"])


def test_emit_report_json_and_csv(tmp_path):
    rep = ExperimentReport(
        config={"procedure": "select"},
        version="0.1.0",
        master_seed=3,
        rows=[{"pser": 0.1}, {"pser": 0.3}],
    )
    rep.aggregates = aggregate_rows(rep.rows)
    jpath = tmp_path / "out.json"
    emit_report(rep, str(jpath), "json")
    doc = json.loads(jpath.read_text())
    assert doc["replications"] == 2
    # aggregates recomputable from emitted rows
    vals = [r["pser"] for r in doc["rows"]]
    assert doc["aggregates"]["pser"]["mean"] == pytest.approx(np.mean(vals), rel=1e-12)

    cpath = tmp_path / "out.csv"
    emit_report(rep, str(cpath), "csv")
    lines = cpath.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 + 2  # header, two rows, mean + se
    assert lines[0] == "replication,pser"

    empty = ExperimentReport(config={}, version="0", master_seed=0, rows=[])
    with pytest.raises(ValueError):
        emit_report(empty, str(tmp_path / "x.json"), "json")


# -- cli ----------------------------------------------------------------------------


def _run_cli(args, env_extra=None):
    env = dict(os.environ)
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "cct.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


def test_cli_two_sample_and_output(tmp_path):
    cfg = tmp_path / "ts.cfg"
    cfg.write_text(
        "procedure = two-sample-test\nscenario = a3\nhypothesis = null\n"
        "n = 120\nm = 120\nalpha = 0.05\nreplications = 2\nseed = 4\n"
    )
    out = tmp_path / "report.json"
    res = _run_cli(["two-sample-test", "--config", str(cfg), "--output", str(out)])
    assert res.returncode == 0, res.stderr
    assert "reject" in res.stdout
    doc = json.loads(out.read_text())
    assert doc["master_seed"] == 4

    # byte-identical report bodies when the identical config runs twice
    first = out.read_bytes()
    res = _run_cli(["two-sample-test", "--config", str(cfg), "--output", str(out)])
    assert res.returncode == 0
    assert out.read_bytes() == first


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("procedure = two-sample-test\n")  # no data source
    res = _run_cli(["two-sample-test", "--config", str(cfg)])
    assert res.returncode == 1
    assert "config error" in res.stderr


def test_cli_runtime_error_exit_code(tmp_path):
    cfg = tmp_path / "rt.cfg"
    cfg.write_text(
        "procedure = two-sample-test\ncsv = /nonexistent/airfoil.csv\n"
        "covariate_cols = a,b\nresponse_cols = y\nsplit = random\nreplications = 1\n"
    )
    res = _run_cli(["two-sample-test", "--config", str(cfg)])
    assert res.returncode == 1  # missing file is reported as a config/data error


def test_cli_subcommand_mismatch(tmp_path):
    cfg = tmp_path / "mm.cfg"
    cfg.write_text("procedure = select\nscenario = a2\n")
    res = _run_cli(["two-sample-test", "--config", str(cfg)])
    assert res.returncode == 1


def test_cli_simulate_and_seed_override(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("procedure = simulate\nscenario = a1\nn = 50\nseed = 1\n")
    out = tmp_path / "sample.csv"
    res = _run_cli(["simulate", "--config", str(cfg), "--output", str(out), "--seed", "2"])
    assert res.returncode == 0, res.stderr
    ds = load_csv(str(out), [f"x{k}" for k in range(10)], ["y"])
    assert ds.covariates.shape == (50, 10)
    # --seed override changes the draw
    out2 = tmp_path / "sample2.csv"
    _run_cli(["simulate", "--config", str(cfg), "--output", str(out2), "--seed", "3"])
    ds2 = load_csv(str(out2), [f"x{k}" for k in range(10)], ["y"])
    assert not np.array_equal(ds.covariates, ds2.covariates)


def test_cli_env_threads_overrides_flag(tmp_path):
    cfg = tmp_path / "ts.cfg"
    cfg.write_text(
        "procedure = two-sample-test\nscenario = a3\nn = 120\nm = 120\n"
        "replications = 2\nseed = 4\n"
    )
    res = _run_cli(
        ["two-sample-test", "--config", str(cfg), "--threads", "2"],
        env_extra={"CCT_THREADS": "1"},
    )
    assert res.returncode == 0, res.stderr
