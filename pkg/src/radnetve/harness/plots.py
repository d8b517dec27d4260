"""Bar charts of the aggregate metrics, one image per metric."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import PROTOCOLS  # noqa: E402
from .experiment import read_aggregate  # noqa: E402
from .metrics import METRICS  # noqa: E402

log = logging.getLogger(__name__)

LABELS = {"rvep": "RVEP", "rp": "RP", "ccn-r": "CCN_R", "ccn-p": "CCN_P"}
UNITS = {"MO": "messages", "LCAN": "ms", "DDR": "fraction", "NoH": "hops", "RoM": "m", "ToMP": "ms"}


def _collect(csv_paths) -> list:
    rows = []
    for p in csv_paths:
        p = Path(p)
        if p.is_dir():
            found = sorted(p.rglob("aggregate.csv"))
            # a sweep directory has a combined file at the top; prefer it
            top = p / "aggregate.csv"
            found = [top] if top.exists() else found
        else:
            found = [p]
        for f in found:
            rows.extend(read_aggregate(f))
    # last row wins for a repeated (scenario, protocol)
    keyed = {(r["scenario"], r["protocol"]): r for r in rows}
    return list(keyed.values())


def emit_plots(csv_paths, out_dir=None) -> list:
    """Write ``<metric>.png`` for every metric present in the aggregates.

    Bars are grouped by scenario with protocols in the fixed order
    rvep, rp, ccn-r, ccn-p; error bars are the standard deviations.
    """
    if isinstance(csv_paths, (str, Path)):
        csv_paths = [csv_paths]
    rows = _collect(csv_paths)
    if not rows:
        log.warning("no aggregate rows found in %s", csv_paths)
        return []
    out = Path(out_dir) if out_dir is not None else Path(csv_paths[0])
    if out.suffix == ".csv":
        out = out.parent
    out.mkdir(parents=True, exist_ok=True)
    scenarios = sorted({r["scenario"] for r in rows})
    protocols = [p for p in PROTOCOLS if any(r["protocol"] == p for r in rows)]
    written = []
    for metric in METRICS:
        if not all(metric in r for r in rows):
            log.warning("metric column %s missing, skipping its chart", metric)
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        width = 0.8 / max(1, len(protocols))
        x = np.arange(len(scenarios))
        for i, proto in enumerate(protocols):
            means, errs = [], []
            for sc in scenarios:
                r = next((r for r in rows if r["scenario"] == sc and r["protocol"] == proto), None)
                m = r.get(metric) if r else None
                s = r.get(metric + "_std", 0.0) if r else 0.0
                means.append(m if isinstance(m, float) and not math.isnan(m) else 0.0)
                errs.append(s if isinstance(s, float) and not math.isnan(s) else 0.0)
            ax.bar(x + (i - (len(protocols) - 1) / 2) * width, means, width, yerr=errs, capsize=3, label=LABELS.get(proto, proto))
        ax.set_xticks(x)
        ax.set_xticklabels(scenarios)
        ax.set_ylabel(f"{metric} ({UNITS[metric]})")
        ax.set_title(metric)
        ax.legend()
        fig.tight_layout()
        path = out / f"{metric}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
