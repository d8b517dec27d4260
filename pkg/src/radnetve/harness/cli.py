"""``sim`` command line: run, sweep, metrics and plot."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from ..core import ConfigurationError
from .config import PROTOCOLS, SCENARIOS, RunConfig
from .experiment import ExperimentError, run_experiment, run_sweep
from .metrics import MetricLog, compute_metrics

# flag name -> RunConfig field
_OVERRIDES = {
    "scenario": "scenario",
    "protocol": "protocol",
    "seed": "seed",
    "duration": "duration",
    "flow": "flow",
    "scale": "scale",
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--flow", type=float, help="vehicles per hour per entry")
    p.add_argument("--scale", type=float, help="multiplier on the desk road geometry")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--no-collisions", action="store_true", help="lossless radio")
    p.add_argument("--events", action="store_true", help="also write per-run event logs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def _config(args) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for flag, name in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[name] = val
    if args.no_collisions:
        data["collisions"] = False
    return RunConfig.from_dict(data)


def _print_summary(label: str, summary: dict):
    parts = []
    for k in ("MO", "LCAN", "DDR", "NoH", "RoM", "ToMP"):
        v = summary.get(k, float("nan"))
        s = summary.get(k + "_std", 0.0)
        if k in ("LCAN", "ToMP"):
            v, s = v * 1e3, s * 1e3
        parts.append(f"{k}={v:.4g}±{s:.2g}" if not math.isnan(v) else f"{k}=nan")
    print(f"{label}: " + " ".join(parts))


def cmd_run(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg, args.replications, args.out, events=args.events, workers=args.workers)
    _print_summary(f"{cfg.scenario}/{cfg.protocol}", res.summary)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    protocols = PROTOCOLS if args.protocols == "all" else tuple(args.protocols.split(","))
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {p!r}")
    results = run_sweep(cfg, protocols, args.replications, args.out, events=args.events, workers=args.workers)
    for proto, res in results.items():
        _print_summary(f"{cfg.scenario}/{proto}", res.summary)
    return 0


def cmd_metrics(args) -> int:
    log_ = MetricLog.read(args.log)
    if args.tomp_distance is not None:
        dist = args.tomp_distance
    else:
        dist = RunConfig(scenario=args.scenario).reference_distance
    report = compute_metrics(log_, dist)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    paths = emit_plots([args.dir], args.out)
    for p in paths:
        print(p)
    return 0 if paths else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim", description="Interest-centric VANET protocol simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one protocol for one or more seeds")
    _common(p)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run several protocols on the same scenario")
    _common(p)
    p.add_argument("--protocols", default="all", help="'all' or a comma list, e.g. rvep,rp")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="compute metrics from an event log")
    p.add_argument("log")
    p.add_argument("--scenario", choices=SCENARIOS, default="grid", help="selects the ToMP reference distance")
    p.add_argument("--tomp-distance", type=float)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("plot", help="bar charts from aggregate CSVs under a directory")
    p.add_argument("dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ExperimentError, OSError) as exc:
        print(f"sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
