"""Config format round-trips, overrides, CLI dispatch and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsync.cli import run
from fracsync.config import (
    ConfigError,
    apply_override,
    config_hash,
    parse_config,
    serialize_config,
)
from fracsync.parallel import resolve_workers, run_chunked

CONFIGS = Path(__file__).parent.parent / "configs"


# --------------------------------------------------------------------------
# config format


def test_parse_basic_sections():
    cfg = parse_config(
        """
        # top comment
        title = "demo"
        [run]
        drift = "example_sec5"  # trailing comment
        dim = 2
        flag = true
        [a.b]
        xs = [1, 2.5, [3, 4]]
        """
    )
    assert cfg["title"] == "demo"
    assert cfg["run"]["drift"] == "example_sec5"
    assert cfg["run"]["dim"] == 2
    assert cfg["run"]["flag"] is True
    assert cfg["a"]["b"]["xs"] == [1, 2.5, [3, 4]]


def test_round_trip_semantic_identity():
    text = (CONFIGS / "sec5.toml").read_text()
    parsed = parse_config(text)
    assert parse_config(serialize_config(parsed)) == parsed


_scalar = st.one_of(
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.booleans(),
    st.text(alphabet=st.characters(whitelist_categories=["Ll", "Lu", "Nd"]), max_size=8),
)
_value = st.one_of(_scalar, st.lists(_scalar, max_size=4),
                   st.lists(st.lists(_scalar, max_size=3), max_size=3))
_key = st.text(alphabet="abcdefghijklmnop_", min_size=1, max_size=10)


@given(st.dictionaries(_key, st.dictionaries(_key, _value, max_size=4), max_size=4))
@settings(max_examples=50, deadline=None)
def test_round_trip_random_configs(config):
    assert parse_config(serialize_config(config)) == config


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_config("key value\n")
    with pytest.raises(ConfigError):
        parse_config("[unclosed\n")
    with pytest.raises(ConfigError):
        parse_config("x = [1, 2\n")
    with pytest.raises(ConfigError):
        parse_config("x = what\n")


def test_override_dotted_paths():
    cfg = parse_config("[run]\nseed = 1\n")
    apply_override(cfg, "run.seed=99")
    apply_override(cfg, "sync.horizon=12.5")
    apply_override(cfg, 'run.drift="linear"')
    assert cfg["run"]["seed"] == 99
    assert cfg["sync"]["horizon"] == 12.5
    assert cfg["run"]["drift"] == "linear"
    with pytest.raises(ConfigError):
        apply_override(cfg, "no_equals_sign")


def test_config_hash_stable_under_key_order():
    a = {"x": {"b": 1, "a": 2}}
    b = {"x": {"a": 2, "b": 1}}
    assert config_hash(a) == config_hash(b)


# --------------------------------------------------------------------------
# CLI behavior


def test_missing_config_exits_1(capsys):
    code = run(["sync", "/nonexistent/conf.toml"])
    assert code == 1
    assert "/nonexistent/conf.toml" in capsys.readouterr().err


def test_unknown_subcommand_exits_1(capsys):
    code = run(["frobnicate", str(CONFIGS / "smoke.toml")])
    assert code == 1


def test_validation_error_exits_1(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = run(["sync", str(CONFIGS / "smoke.toml"), "--set", "run.hurst=1.5"])
    assert code == 1


def test_sync_smoke_end_to_end(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = run([
        "sync", str(CONFIGS / "smoke.toml"),
        "--set", "sync.n_seeds=1", "--set", "sync.horizon=2.0",
    ])
    assert code == 0
    report_files = list(tmp_path.glob("out-smoke/sync-*/report.json"))
    assert len(report_files) == 1
    report = json.loads(report_files[0].read_text())
    assert "final_r" in report
    assert report["version"]
    assert report["config"]["sync"]["horizon"] == 2.0
    series = report_files[0].parent / "r_series.csv"
    assert series.read_text().startswith("t,R")


def test_pushout_no_acceptance_exits_3(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = run([
        "pushout", str(CONFIGS / "smoke.toml"),
        "--set", "pushout.delta=0.000001", "--set", "pushout.n_attempts=4",
    ])
    assert code == 3
    report = json.loads(next(tmp_path.glob("out-smoke/pushout-*/report.json")).read_text())
    assert report["conditioned"]["n_accepted"] == 0
    assert report["conditioned"]["min_sup_distance"] > 0


def test_simulate_rerun_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    argv = ["simulate", str(CONFIGS / "smoke.toml")]
    assert run(argv) == 0
    outdir = next(tmp_path.glob("out-smoke/simulate-*"))
    first = {
        f.name: f.read_bytes() for f in outdir.iterdir() if f.name != "meta.json"
    }
    assert run(argv) == 0
    second = {
        f.name: f.read_bytes() for f in outdir.iterdir() if f.name != "meta.json"
    }
    assert first == second


def test_outdir_named_by_hash(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run(["simulate", str(CONFIGS / "smoke.toml")])
    run(["simulate", str(CONFIGS / "smoke.toml"), "--set", "run.seed=8"])
    dirs = list(tmp_path.glob("out-smoke/simulate-*"))
    assert len(dirs) == 2  # different resolved configs, different directories


# --------------------------------------------------------------------------
# worker pool


def test_resolve_workers_env_override(monkeypatch):
    monkeypatch.setenv("FRACSYNC_THREADS", "3")
    assert resolve_workers(1) == 3
    monkeypatch.delenv("FRACSYNC_THREADS")
    assert resolve_workers(2) == 2
    assert resolve_workers(0) >= 1


def test_run_chunked_matches_serial():
    chunks = [range(0, 3), range(3, 6), range(6, 8)]

    def task(chunk):
        return [i * i for i in chunk]

    serial = [task(c) for c in chunks]
    parallel = run_chunked(task, chunks, workers=2)
    assert parallel == serial


def test_parallel_lyapunov_matches_serial():
    from fracsync.drift import DiffusionMatrix, make_drift
    from fracsync.lyapunov import LyapunovConfig, estimate_lambda1

    drift = make_drift("linear", 2, rate=1.0)
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    base = dict(horizon=6.0, n_realizations=6, dt=1e-2, burn_in=1.0, seed=0, chunk=2)
    serial = estimate_lambda1(drift, sigma, 0.5, LyapunovConfig(**base, workers=1))
    par = estimate_lambda1(drift, sigma, 0.5, LyapunovConfig(**base, workers=2))
    assert np.array_equal(serial.per_realization, par.per_realization)
