import json

import pytest

from radnetve.core import ConfigurationError
from radnetve.harness import experiment
from radnetve.harness.cli import main
from radnetve.harness.config import RunConfig, full_scale_config
from radnetve.harness.experiment import (
    AGGREGATE_COLUMNS,
    RUN_COLUMNS,
    ExperimentError,
    read_aggregate,
    run_experiment,
    run_sweep,
)
from radnetve.harness.metrics import METRICS
from radnetve.harness.plots import emit_plots


def _tiny(**kw):
    base = dict(scenario="grid", duration=20.0, flow=600.0, grid_blocks=1)
    base.update(kw)
    return RunConfig(**base)


def test_config_validation_and_round_trip(tmp_path):
    cfg = _tiny(protocol="ccn-p")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path) == cfg
    with pytest.raises(ConfigurationError):
        RunConfig(protocol="aodv")
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigurationError):
        RunConfig(ccn_data_addressing="flood")
    hw = full_scale_config("highway")
    assert (hw.duration, hw.flow, hw.road_length, hw.reference_distance) == (3600.0, 1500.0, 10000.0, 10000.0)
    assert RunConfig(scenario="highway").reference_distance == 1000.0


def test_experiment_outputs_are_byte_identical(tmp_path):
    a = run_experiment(_tiny(), 2, tmp_path / "a")
    b = run_experiment(_tiny(), 2, tmp_path / "b")
    for name in ("runs.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "runs.csv").read_text().splitlines()[0]
    assert header.split(",") == list(RUN_COLUMNS)
    assert [r["seed"] for r in a.runs] == [1, 2]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"] == manifest["completed_seeds"] == [1, 2]
    assert manifest["config"]["duration"] == 20.0 and "error" not in manifest
    assert a.summary["MO"] == b.summary["MO"] > 0


def test_failure_keeps_completed_rows(tmp_path, monkeypatch):
    real = experiment._one

    def flaky(cfg, events_dir):
        if cfg.seed == 2:
            raise RuntimeError("boom")
        return real(cfg, events_dir)

    monkeypatch.setattr(experiment, "_one", flaky)
    with pytest.raises(ExperimentError, match="1 completed"):
        run_experiment(_tiny(), 3, tmp_path)
    assert len((tmp_path / "runs.csv").read_text().splitlines()) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["completed_seeds"] == [1] and "boom" in manifest["error"]


def test_sweep_and_plots(tmp_path):
    res = run_sweep(_tiny(duration=10.0), replications=1, out_dir=tmp_path, events=True)
    assert set(res) == {"rvep", "rp", "ccn-r", "ccn-p"}
    rows = read_aggregate(tmp_path / "aggregate.csv")
    assert [r["protocol"] for r in rows] == ["rvep", "rp", "ccn-r", "ccn-p"]
    assert list(rows[0]) == list(AGGREGATE_COLUMNS)
    assert (tmp_path / "grid_rp" / "events_grid_rp_1.jsonl.gz").exists()
    paths = emit_plots([tmp_path])
    assert sorted(p.name for p in paths) == sorted(f"{m}.png" for m in METRICS)
    assert all(p.stat().st_size > 0 for p in paths)


def test_cli_run_metrics_plot(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "grid", "--duration", "10", "--protocol", "rp", "--out", str(out), "--events"]) == 0
    assert "grid/rp: MO=" in capsys.readouterr().out
    assert main(["metrics", str(out / "events_grid_rp_1.jsonl.gz")]) == 0
    report = json.loads(capsys.readouterr().out)
    row = read_aggregate(out / "aggregate.csv")[0]
    assert report["MO"] == row["MO"]
    assert main(["plot", str(out), "--out", str(tmp_path / "figs")]) == 0
    assert len(list((tmp_path / "figs").glob("*.png"))) == len(METRICS)


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"protocol": "aodv"}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--protocols", "rvep,olsr", "--out", str(tmp_path)]) == 2
    assert "sim: error" in capsys.readouterr().err


def test_event_trace_replays_identically():
    from radnetve.harness import World

    cfg = _tiny(protocol="rvep", duration=15.0)
    a = World(cfg, trace=True)
    a.run()
    b = World(cfg, trace=True)
    b.run()
    assert len(a.kernel.trace) > 1000
    assert repr(a.kernel.trace).encode() == repr(b.kernel.trace).encode()
