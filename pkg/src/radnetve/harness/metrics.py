"""Event log of a run and the six evaluation metrics computed from it.

Metric definitions, per message key:

* MO   number of successful network-layer receptions.
* LCAN mean time from a frame entering the sender's MAC queue to its
       reception by a one-hop neighbour (seconds).
* DDR  payload bytes of messages received by at least one intended
       consumer over payload bytes of messages that had one at send time.
* NoH  largest hop number at which the message was received.
* RoM  largest distance from the origin at which it was received.
* ToMP time from the application send to the first reception at least
       ``tomp_distance`` metres from the origin.
"""
from __future__ import annotations

import gzip
import json
import logging
import math
from array import array
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

METRICS = ("MO", "LCAN", "DDR", "NoH", "RoM", "ToMP")

DROP_REASONS = (
    "queue_overflow",
    "attempts_exhausted",
    "duplicate",
    "road",
    "malformed",
    "suppressed",
    "no_pit",
    "pit_full",
    "aggregated",
    "hop_limit",
    "no_match",
    "not_selected",
    "no_request",
)


@dataclass
class MessageRecord:
    key: int
    t: int  # ns
    node: int
    interest: str
    payload_bytes: int
    origin: tuple
    intended: frozenset = field(default_factory=frozenset)


class MetricLog:
    """Append-only, columnar record of one run.

    Receptions dominate the volume, so they are stored as flat ``array``
    rows of ``(t, node, key, hop, dist, latency)``.
    """

    RX_STRIDE = 6

    def __init__(self):
        self.messages = []
        self.tx = array("d")  # t, node, key
        self.rx = array("d")
        self.fwd = array("d")  # t, node, key, hop
        self.deliveries = array("d")  # t, node, key
        self.drops = []  # (t, node, key, reason)
        # duplicate receptions are the bulk of all drops; only their count is kept
        self.duplicates = 0

    def app_send(self, t, node, interest, payload_bytes, origin, intended=()) -> int:
        key = len(self.messages)
        self.messages.append(
            MessageRecord(key, int(t), int(node), interest, int(payload_bytes), tuple(origin), frozenset(intended))
        )
        return key

    def net_tx(self, t, node, key):
        self.tx.extend((t, node, key))

    def net_rx(self, t, node, key, hop, dist, latency):
        self.rx.extend((t, node, key, hop, dist, latency))

    def forward(self, t, node, key, hop):
        self.fwd.extend((t, node, key, hop))

    def app_deliver(self, t, node, key):
        self.deliveries.extend((t, node, key))

    def drop(self, t, node, key, reason):
        if reason == "duplicate":
            self.duplicates += 1
            return
        self.drops.append((int(t), int(node), int(key), reason))

    # -- persistence --------------------------------------------------------

    def records(self):
        """Yield every event as a JSON-able dict, in append order per kind."""
        for m in self.messages:
            yield {
                "ev": "app_send",
                "t": m.t,
                "node": m.node,
                "key": m.key,
                "interest": m.interest,
                "bytes": m.payload_bytes,
                "origin": list(m.origin),
                "intended": sorted(m.intended),
            }
        for i in range(0, len(self.tx), 3):
            t, n, k = self.tx[i : i + 3]
            yield {"ev": "net_tx", "t": int(t), "node": int(n), "key": int(k)}
        for i in range(0, len(self.rx), self.RX_STRIDE):
            t, n, k, h, d, lat = self.rx[i : i + self.RX_STRIDE]
            yield {"ev": "net_rx", "t": int(t), "node": int(n), "key": int(k), "hop": int(h), "dist": d, "lat": int(lat)}
        for i in range(0, len(self.fwd), 4):
            t, n, k, h = self.fwd[i : i + 4]
            yield {"ev": "forward", "t": int(t), "node": int(n), "key": int(k), "hop": int(h)}
        for i in range(0, len(self.deliveries), 3):
            t, n, k = self.deliveries[i : i + 3]
            yield {"ev": "app_deliver", "t": int(t), "node": int(n), "key": int(k)}
        for t, n, k, reason in self.drops:
            yield {"ev": "drop", "t": t, "node": n, "key": k, "reason": reason}
        yield {"ev": "duplicates", "count": self.duplicates}

    def write(self, path) -> Path:
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wt", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, separators=(",", ":")))
                fh.write("\n")
        return path

    @classmethod
    def read(cls, path) -> "MetricLog":
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        out = cls()
        pending = []
        with opener(path, "rt", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                pending.append(json.loads(line))
        sends = sorted((r for r in pending if r["ev"] == "app_send"), key=lambda r: r["key"])
        for r in sends:
            out.messages.append(
                MessageRecord(r["key"], r["t"], r["node"], r["interest"], r["bytes"], tuple(r["origin"]), frozenset(r["intended"]))
            )
        for r in pending:
            ev = r["ev"]
            if ev == "net_tx":
                out.net_tx(r["t"], r["node"], r["key"])
            elif ev == "net_rx":
                out.net_rx(r["t"], r["node"], r["key"], r["hop"], r["dist"], r["lat"])
            elif ev == "forward":
                out.forward(r["t"], r["node"], r["key"], r["hop"])
            elif ev == "app_deliver":
                out.app_deliver(r["t"], r["node"], r["key"])
            elif ev == "drop":
                out.drop(r["t"], r["node"], r["key"], r["reason"])
            elif ev == "duplicates":
                out.duplicates = r["count"]
        return out


def compute_metrics(log_: MetricLog, tomp_distance: float = 300.0) -> dict:
    """Reduce a run's log to the six metrics plus a few supporting counts.

    Times are reported in seconds, DDR as a fraction in [0, 1]. Metrics
    without any contributing sample are reported as 0.0 (ToMP as NaN when
    no message ever reached ``tomp_distance``).
    """
    report = {
        "MO": 0,
        "LCAN": 0.0,
        "DDR": 0.0,
        "NoH": 0,
        "NoH_mean": 0.0,
        "RoM": 0.0,
        "RoM_max": 0.0,
        "ToMP": float("nan"),
        "messages": len(log_.messages),
        "net_tx": len(log_.tx) // 3,
        "forwards": len(log_.fwd) // 4,
        "deliveries": len(log_.deliveries) // 3,
        "drops": len(log_.drops),
        "duplicates": log_.duplicates,
    }
    if not log_.messages and not log_.rx:
        log.warning("empty metric log, reporting zeros")
        return report

    rx = np.frombuffer(log_.rx, dtype=np.float64).reshape(-1, MetricLog.RX_STRIDE) if len(log_.rx) else np.zeros((0, 6))
    report["MO"] = int(rx.shape[0])
    if rx.shape[0]:
        report["LCAN"] = float(rx[:, 5].mean()) / 1e9

    # delivery ratio
    nmsg = len(log_.messages)
    delivered = np.zeros(nmsg, dtype=bool)
    intended = [m.intended for m in log_.messages]
    for i in range(0, len(log_.deliveries), 3):
        node = int(log_.deliveries[i + 1])
        key = int(log_.deliveries[i + 2])
        if 0 <= key < nmsg and node in intended[key]:
            delivered[key] = True
    sent_bytes = 0
    got_bytes = 0
    for m in log_.messages:
        if m.intended:
            sent_bytes += m.payload_bytes
            if delivered[m.key]:
                got_bytes += m.payload_bytes
    report["DDR"] = got_bytes / sent_bytes if sent_bytes else 0.0
    report["DDR_sent_bytes"] = sent_bytes

    if rx.shape[0] and nmsg:
        keys = rx[:, 2].astype(np.int64)
        max_hop = np.zeros(nmsg)
        np.maximum.at(max_hop, keys, rx[:, 3])
        max_dist = np.full(nmsg, -1.0)
        np.maximum.at(max_dist, keys, rx[:, 4])
        seen = np.zeros(nmsg, dtype=bool)
        seen[keys] = True
        report["NoH"] = int(max_hop[seen].max())
        report["NoH_mean"] = float(max_hop[seen].mean())
        report["RoM"] = float(max_dist[seen].mean())
        report["RoM_max"] = float(max_dist[seen].max())
        far = rx[rx[:, 4] >= tomp_distance]
        if far.shape[0]:
            first = np.full(nmsg, np.inf)
            np.minimum.at(first, far[:, 2].astype(np.int64), far[:, 0])
            t_send = np.array([m.t for m in log_.messages], dtype=np.float64)
            reached = np.isfinite(first)
            report["ToMP"] = float((first[reached] - t_send[reached]).mean()) / 1e9
            report["ToMP_count"] = int(reached.sum())
    return report


def aggregate(reports: list) -> dict:
    """Mean and sample standard deviation (ddof=1; 0 for one run) per metric."""
    out = {}
    for name in METRICS:
        vals = np.array([r[name] for r in reports], dtype=float)
        finite = vals[np.isfinite(vals)]
        mean = float(finite.mean()) if finite.size else float("nan")
        std = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
        out[name] = mean
        out[name + "_std"] = std
    return out


def is_close(a: float, b: float, rel: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)
