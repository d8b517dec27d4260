"""Assembles a runnable world: roads, traffic, radio, protocol stacks and apps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..apps import (
    CcnPort,
    CooperativeCruise,
    DriverAssistant,
    InterestTable,
    ObstacleNotifier,
    RadnetPort,
    TrafficLightController,
    segment_capacity,
)
from ..ccn import CcnNode
from ..core import InterestCodebook, generate_prefix
from ..radio import Medium
from ..roadnet import SCENARIO_IDM, SignalBoard, Traffic, grid_network, highway_network
from ..rp import RpNode
from ..rvep import VeNode
from ..simkernel import Kernel, seconds
from .config import RunConfig
from .metrics import MetricLog, compute_metrics

log = logging.getLogger(__name__)


class Host:
    """What a protocol needs to know about the node it runs on."""

    __slots__ = ("nid", "kind", "road_ids", "heading", "_pos")

    def __init__(self, nid, kind, road_ids, pos_array, heading=1):
        self.nid = nid
        self.kind = kind
        self.road_ids = list(road_ids)
        self.heading = heading
        self._pos = pos_array

    def position(self) -> tuple:
        p = self._pos()[self.nid]
        return (float(p[0]), float(p[1]))


@dataclass
class NodeHandle:
    host: Host
    proto: object
    port: object
    app: object = None
    vehicle: object = None


@dataclass
class RunResult:
    config: RunConfig
    metrics: dict
    log: MetricLog
    stats: dict = field(default_factory=dict)


class World:
    def __init__(self, cfg: RunConfig, trace: bool = False):
        self.cfg = cfg
        self.kernel = Kernel(cfg.seed, trace=trace)
        self.log = MetricLog()
        self.profile = cfg.radio_profile
        self.medium = Medium(
            self.kernel, self.profile, self.kernel.streams["mac"], deliver=self._deliver, log=self.log, collisions=cfg.collisions
        )
        self.codebook = InterestCodebook()
        self.interest_table = InterestTable(cfg.interest_table)
        self.registry = {}
        self.prefix_index = {}
        self.handles = []
        self.grid_neighbors = {}
        self.apps = []
        self._prefix_rng = self.kernel.streams["prefix"]
        self.signals = None
        if cfg.scenario == "grid":
            self.network = grid_network(cfg.blocks, cfg.spacing)
            self.signals = SignalBoard(self.network.intersections)
        else:
            self.network = highway_network(cfg.road_length, obstacle_length=cfg.obstacle_length, obstacle_speed=cfg.obstacle_speed)
        self.traffic = Traffic(
            self.kernel,
            self.network,
            SCENARIO_IDM[cfg.scenario],
            self.signals,
            on_spawn=self._on_spawn,
            on_road_change=self._on_road_change,
            on_despawn=self._on_despawn,
            on_step=self._on_step,
        )
        self._build_infrastructure()

    # -- nodes ------------------------------------------------------------------

    def _pos(self):
        return self.medium.pos

    def add_node(self, kind: str, xy, road_ids) -> NodeHandle:
        cfg = self.cfg
        nid = self.medium.add_node(*xy)
        host = Host(nid, kind, road_ids, self._pos)
        proto_name = cfg.protocol
        if proto_name in ("rp", "rvep"):
            prefix = generate_prefix(cfg.prefix_fields, cfg.prefix_values, self._prefix_rng)
            self.prefix_index.setdefault(prefix, set()).add(nid)
            if proto_name == "rp":
                proto = RpNode(host, prefix, self.medium, hop_limit=cfg.protocol_hops, log=self.log)
            else:
                proto = VeNode(
                    host, prefix, self.medium, self.network, max_hops=cfg.rvep_max_hops,
                    cancel_on_overhear=cfg.forward_cancellation, log=self.log,
                )
            port = RadnetPort(self, host, proto, directional=proto_name == "rvep")
        else:
            # keep the prefix stream aligned across protocols
            generate_prefix(cfg.prefix_fields, cfg.prefix_values, self._prefix_rng)
            proto = CcnNode(
                host, self.medium, mode="reactive" if proto_name == "ccn-r" else "proactive",
                hop_limit=cfg.protocol_hops, pit_lifetime=cfg.pit_lifetime, timer_k=cfg.ccn_timer_k,
                data_addressing=cfg.ccn_data_addressing, log=self.log,
            )
            port = CcnPort(self, host, proto, collect_window=cfg.collect_window, max_reexpress=cfg.max_reexpress)
        handle = NodeHandle(host, proto, port)
        self.handles.append(handle)
        return handle

    def _deliver(self, receiver: int, frame):
        self.handles[receiver].proto.on_frame(frame)

    def intended(self, interest: str, dest, sender: int) -> frozenset:
        nodes = self.registry.get(interest)
        if not nodes:
            return frozenset()
        if dest is None:
            return frozenset(n for n in nodes if n != sender)
        if self.cfg.protocol in ("rp", "rvep"):
            ids = self.prefix_index.get(dest, ())
        else:
            ids = (dest,)
        return frozenset(n for n in ids if n in nodes)

    # -- infrastructure -----------------------------------------------------------

    def _build_infrastructure(self):
        cfg = self.cfg
        if cfg.scenario == "grid":
            inters = self.network.intersections
            by_cell = {inter.grid: inter for inter in inters}
            p = SCENARIO_IDM["grid"]
            cap = segment_capacity(cfg.spacing, p.length, p.s0)
            for inter in inters:
                i, j = inter.grid
                self.grid_neighbors[inter.id] = tuple(
                    by_cell[c].id for c in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)) if c in by_cell
                )
                roads = list(inter.incoming.values()) + list(inter.outgoing.values())
                handle = self.add_node("tlc", inter.position, roads)
                app = TrafficLightController(
                    self, handle.port, inter, self.signals, cap, poll=cfg.poll_period, adjust=cfg.phase_adjust,
                    v0=p.v0, spacing=cfg.spacing,
                )
                handle.app = app
                self.apps.append(app)
        else:
            length = cfg.road_length
            x = length - cfg.obstacle_length - cfg.on_distance
            handle = self.add_node("on", (x, 0.0), [1])
            handle.app = ObstacleNotifier(self, handle.port, 1, (length - cfg.obstacle_length, 0.0), cfg.obstacle_speed)
            self.apps.append(handle.app)

    # -- traffic hooks ----------------------------------------------------------------

    def _on_spawn(self, veh):
        handle = self.add_node("vehicle", veh.position, [veh.road_id])
        handle.vehicle = veh
        veh.node = handle
        if self.cfg.scenario == "grid":
            handle.app = DriverAssistant(self, handle.port, veh)
        else:
            handle.app = CooperativeCruise(self, handle.port, veh)
            handle.app.start()

    def _on_road_change(self, veh, old_road):
        handle = veh.node
        handle.host.road_ids = [veh.road_id]
        if isinstance(handle.app, DriverAssistant):
            handle.app.on_road_change(veh.road_id)

    def _on_despawn(self, veh):
        handle = veh.node
        if isinstance(handle.app, CooperativeCruise):
            handle.app.stop()
        handle.port.close()
        nid = handle.host.nid
        self.medium.remove_node(nid)
        prefix = getattr(handle.proto, "prefix", None)
        if prefix is not None:
            self.prefix_index.get(prefix, set()).discard(nid)

    def _on_step(self):
        pos = self.medium.pos
        for veh in self.traffic.vehicles.values():
            x, y = veh.position
            nid = veh.node.host.nid
            pos[nid, 0] = x
            pos[nid, 1] = y

    # -- execution ------------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        rng = self.kernel.streams["traffic"]
        if cfg.scenario == "grid":
            for corr in self.network.corridors:
                self.traffic.add_flow(corr, cfg.flow, rng, cfg.duration)
            for app in self.apps:
                app.start()
        else:
            self.traffic.add_flow(self.network.corridors[0], cfg.flow, rng, cfg.duration)
        self.traffic.start()
        self.kernel.run_until(seconds(cfg.duration))
        metrics = compute_metrics(self.log, cfg.reference_distance)
        stats = {
            "vehicles": self.traffic.spawned,
            "rear_end_collisions": self.traffic.collisions,
            "min_gap": self.traffic.min_gap,
            "events": self.kernel.executed,
            **{f"radio_{k}": v for k, v in self.medium.stats.items()},
        }
        return RunResult(cfg, metrics, self.log, stats)


def run_scenario(cfg: RunConfig, trace: bool = False) -> RunResult:
    return World(cfg, trace=trace).run()
