"""Replicated runs, protocol sweeps and their CSV/JSON outputs."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from .config import PROTOCOLS, RunConfig
from .metrics import METRICS, aggregate
from .scenario import run_scenario

log = logging.getLogger(__name__)

# metrics reported in milliseconds in the CSV files
_MS = {"LCAN", "ToMP"}

RUN_COLUMNS = ("scenario", "protocol", "seed") + METRICS + ("NoH_mean", "messages", "net_tx", "forwards", "deliveries", "drops", "duplicates", "vehicles", "rear_end_collisions")
AGGREGATE_COLUMNS = ("scenario", "protocol", "runs") + tuple(c for m in METRICS for c in (m, m + "_std"))


class ExperimentError(RuntimeError):
    """A replication failed; rows finished before it are already on disk."""


@dataclass
class ExperimentResult:
    config: RunConfig
    runs: list = field(default_factory=list)  # one dict per replication
    summary: dict = field(default_factory=dict)
    out_dir: Path = None


def code_version() -> str:
    """Package version plus a digest of the installed sources."""
    root = Path(__file__).resolve().parent.parent
    h = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(round(value, 9))
    return str(value)


def _display(name: str, value):
    return value * 1e3 if name.split("_")[0] in _MS and isinstance(value, float) else value


def _row(cfg: RunConfig, metrics: dict, stats: dict) -> dict:
    row = {"scenario": cfg.scenario, "protocol": cfg.protocol, "seed": cfg.seed}
    for col in RUN_COLUMNS[3:]:
        if col in metrics:
            row[col] = _display(col, metrics[col])
        else:
            row[col] = stats.get(col, "")
    return row


def _one(cfg: RunConfig, events_dir):
    res = run_scenario(cfg)
    if events_dir is not None:
        res.log.write(Path(events_dir) / f"events_{cfg.scenario}_{cfg.protocol}_{cfg.seed}.jsonl.gz")
    return res.metrics, res.stats


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _write_manifest(path: Path, cfg: RunConfig, seeds, completed, error=None):
    manifest = {
        "config": cfg.to_dict(),
        "code_version": code_version(),
        "seeds": list(seeds),
        "completed_seeds": list(completed),
        "metrics_units": {"LCAN": "ms", "ToMP": "ms", "DDR": "fraction", "RoM": "m"},
    }
    if error is not None:
        manifest["error"] = error
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: RunConfig, replications: int = 10, out_dir=None, events: bool = False, workers: int = 1) -> ExperimentResult:
    """Run ``replications`` seeds starting at ``cfg.seed``.

    Writes ``runs.csv``, ``aggregate.csv`` and ``manifest.json`` to
    ``out_dir`` when given. Rows are flushed after every finished run, so a
    failure leaves the completed replications behind.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    seeds = [cfg.seed + i for i in range(replications)]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    events_dir = out if (events and out is not None) else None
    result = ExperimentResult(cfg, out_dir=out)
    reports = []

    def finish(seed, metrics, stats):
        reports.append(metrics)
        result.runs.append(_row(cfg.with_(seed=seed), metrics, stats))
        if out is not None:
            _write_csv(out / "runs.csv", RUN_COLUMNS, result.runs)

    try:
        if workers > 1 and replications > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_one, cfg.with_(seed=s), events_dir) for s in seeds]
                for s, fut in zip(seeds, futures):
                    finish(s, *fut.result())
        else:
            for s in seeds:
                t0 = time.perf_counter()
                finish(s, *_one(cfg.with_(seed=s), events_dir))
                log.info("%s/%s seed %d done in %.1fs", cfg.scenario, cfg.protocol, s, time.perf_counter() - t0)
    except Exception as exc:
        if out is not None:
            _write_manifest(out / "manifest.json", cfg, seeds, [r["seed"] for r in result.runs], error=repr(exc))
        raise ExperimentError(f"replication failed after {len(result.runs)} completed run(s): {exc!r}") from exc

    summary = aggregate(reports)
    result.summary = summary
    if out is not None:
        row = {"scenario": cfg.scenario, "protocol": cfg.protocol, "runs": replications}
        row.update({k: _display(k, v) for k, v in summary.items()})
        _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, [row])
        _write_manifest(out / "manifest.json", cfg, seeds, seeds)
    return result


def run_sweep(base: RunConfig, protocols=PROTOCOLS, replications: int = 10, out_dir=None, events: bool = False, workers: int = 1) -> dict:
    """One experiment per protocol; also writes a combined ``aggregate.csv``."""
    out = Path(out_dir) if out_dir is not None else None
    results = {}
    for proto in protocols:
        sub = out / f"{base.scenario}_{proto}" if out is not None else None
        results[proto] = run_experiment(base.with_(protocol=proto), replications, sub, events=events, workers=workers)
    if out is not None:
        rows = []
        for proto, res in results.items():
            row = {"scenario": base.scenario, "protocol": proto, "runs": replications}
            row.update({k: _display(k, v) for k, v in res.summary.items()})
            rows.append(row)
        _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, rows)
    return results


def read_aggregate(path) -> list:
    """Rows of an aggregate CSV with numeric fields converted to float."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k in ("scenario", "protocol"):
                continue
            try:
                r[k] = float(v)
            except (TypeError, ValueError):
                pass
    return rows
