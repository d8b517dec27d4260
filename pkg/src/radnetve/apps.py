"""Scenario applications and the protocol-neutral messaging port.

Applications speak in interest strings (``vehicle_entering_in_7_req`` ...)
and opaque addresses. A port turns those into RAdNet / RAdNet-VE messages
or CCN Interest/Data exchanges, so the same application code runs over
every protocol.

Payloads are fixed little-endian records, see :data:`SCHEMAS`.
"""
from __future__ import annotations

import logging
import math
import re
import struct
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

from .ccn import INTEREST, make_name
from .roadnet import PhasePlan

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Interest table: template -> (max hops, direction)

DEFAULT_INTEREST_TABLE = {
    "vehicle_entering_in_<r>_req": (5, -1),
    "vehicle_entering_in_<r>_data": (5, 1),
    "vehicle_leaving_<r>_req": (5, 1),
    "vehicle_leaving_<r>_data": (5, -1),
    "ack_vehicle_entering_in_<r>_req": (5, 1),
    "ack_vehicle_entering_in_<r>_data": (5, -1),
    "ack_vehicle_leaving_<r>_req": (5, 1),
    "ack_vehicle_leaving_<r>_data": (5, -1),
    "obstacle_req": (50, 1),
    "obstacle_data": (50, -1),
    "presence_req": (1, 0),
    "presence_data": (1, 0),
    "state_req": (1, 1),
    "state_data": (1, -1),
    # controller-to-controller exchange
    "tlc_occupancy_req": (5, 0),
    "tlc_occupancy_data": (5, 0),
    "tlc_offset_req": (5, 0),
    "tlc_offset_data": (5, 0),
}


class InterestTable:
    """Resolves concrete interest names against ``<r>`` templates."""

    def __init__(self, table: Optional[dict] = None):
        self.table = dict(DEFAULT_INTEREST_TABLE if table is None else table)
        self._patterns = []
        for template, spec in self.table.items():
            rx = "^" + re.escape(template).replace(re.escape("<r>"), r"\d+") + "$"
            self._patterns.append((re.compile(rx), tuple(spec)))
        self._cache = {}

    def lookup(self, interest: str) -> tuple:
        """``(max_hops, direction)`` for ``interest``; KeyError if unknown."""
        spec = self._cache.get(interest)
        if spec is None:
            for rx, s in self._patterns:
                if rx.match(interest):
                    spec = s
                    break
            else:
                raise KeyError(interest)
            self._cache[interest] = spec
        return spec

    def max_hops(self, interest: str) -> int:
        return self.lookup(interest)[0]

    def direction(self, interest: str) -> int:
        return self.lookup(interest)[1]


# ---------------------------------------------------------------------------
# Payload schemas


class Schema:
    def __init__(self, name: str, fmt: str, fields: str):
        self.struct = struct.Struct("<" + fmt)
        self.record = namedtuple(name, fields)
        self.size = self.struct.size

    def pack(self, *args, **kw) -> bytes:
        return self.struct.pack(*self.record(*args, **kw))

    def unpack(self, buf: bytes):
        return self.record._make(self.struct.unpack_from(buf))


SCHEMAS = {
    "road_request": Schema("RoadRequest", "II", "road_id seq"),
    "vehicle_report": Schema("VehicleReport", "IIff", "vehicle road_id x y"),
    "ack": Schema("Ack", "II", "vehicle road_id"),
    "obstacle_request": Schema("ObstacleRequest", "Iff", "road_id x y"),
    "obstacle_report": Schema("ObstacleReport", "Ifff", "road_id x y speed_limit"),
    "presence_request": Schema("PresenceRequest", "Iff", "road_id x y"),
    "presence_report": Schema("PresenceReport", "IIff", "vehicle road_id s speed"),
    "state_request": Schema("StateRequest", "II", "vehicle seq"),
    "state_report": Schema("StateReport", "IIfff", "vehicle road_id s speed accel"),
    "occupancy_request": Schema("OccupancyRequest", "I", "intersection"),
    "occupancy_report": Schema("OccupancyReport", "Iff", "intersection occ_h occ_v"),
    "offset_request": Schema("OffsetRequest", "I", "intersection"),
    "offset_report": Schema("OffsetReport", "If", "intersection offset"),
}


# ---------------------------------------------------------------------------
# Messaging ports


class MessagingPort:
    """Protocol-neutral send/receive surface for one node."""

    supports_direction = False
    supports_hops = False

    def __init__(self, world, host):
        self.world = world
        self.host = host
        self.handlers = {}
        self.closed = False

    @property
    def address(self):
        raise NotImplementedError

    def register(self, interest: str, handler) -> None:
        self.handlers[interest] = handler
        self.world.registry.setdefault(interest, set()).add(self.host.nid)
        self._attach(interest)

    def unregister(self, interest: str) -> None:
        if self.handlers.pop(interest, None) is not None:
            self.world.registry.get(interest, set()).discard(self.host.nid)
            self._detach(interest)

    def send(self, interest: str, payload: bytes, dest=None, direction: int = 0, road_id: int = 0) -> int:
        if self.closed:
            return -1
        world = self.world
        intended = world.intended(interest, dest, self.host.nid)
        key = world.log.app_send(world.kernel.now, self.host.nid, interest, len(payload), self.host.position(), intended)
        self._send(interest, payload, dest, direction, road_id, key)
        return key

    def close(self) -> None:
        for interest in list(self.handlers):
            self.unregister(interest)
        self.closed = True

    def dispatch(self, interest: str, payload: bytes, src) -> None:
        handler = self.handlers.get(interest)
        if handler is not None and not self.closed:
            handler(interest, payload, src)

    # backend hooks
    def _attach(self, interest):
        pass

    def _detach(self, interest):
        pass

    def _send(self, interest, payload, dest, direction, road_id, key):
        raise NotImplementedError


class RadnetPort(MessagingPort):
    """Port over :class:`~radnetve.rp.RpNode` or :class:`~radnetve.rvep.VeNode`."""

    def __init__(self, world, host, proto, directional: bool):
        super().__init__(world, host)
        self.proto = proto
        self.supports_direction = directional
        self.supports_hops = directional
        proto.on_deliver = self._on_deliver

    @property
    def address(self):
        return self.proto.prefix

    def _attach(self, interest):
        code = self.world.codebook.code(interest)
        self.proto.register_interest(code, self.world.interest_table.max_hops(interest))

    def _detach(self, interest):
        self.proto.unregister_interest(self.world.codebook.code(interest))

    def _send(self, interest, payload, dest, direction, road_id, key):
        code = self.world.codebook.code(interest)
        if self.supports_direction:
            self.proto.send(code, payload, dest, direction, road_id, key=key)
        else:
            self.proto.send(code, payload, dest, key=key)

    def _on_deliver(self, code, payload, src_prefix, key):
        self.dispatch(self.world.codebook.name(code), payload, src_prefix)


class CcnPort(MessagingPort):
    """Port over :class:`~radnetve.ccn.CcnNode`.

    ``*_req`` interests become Interests and ``*_data`` sends become Data
    answering the pending Interest of ``dest``. A request without a
    destination is meant for every provider, so after each answer the
    Interest is expressed again excluding the producers already heard,
    until ``collect_window`` elapses or ``max_reexpress`` is reached.
    """

    def __init__(self, world, host, node, collect_window: float = 1.0, max_reexpress: int = 10):
        super().__init__(world, host)
        self.node = node
        self.rng = world.kernel.streams["ccn-nonce"]
        self.collect_window = int(round(collect_window * 1e9))
        self.max_reexpress = max_reexpress
        self.rounds = {}  # name text -> open collection round
        node.on_deliver = self._on_deliver

    @property
    def address(self):
        return self.host.nid

    def _attach(self, interest):
        if interest.endswith("_req"):
            self.node.register_service(interest[:-4])

    def _detach(self, interest):
        if interest.endswith("_req"):
            self.node.unregister_service(interest[:-4])

    def _send(self, interest, payload, dest, direction, road_id, key):
        if interest.endswith("_req"):
            service = interest[:-4]
            name = make_name(service, road_id, direction, dest)
            pkt = self.node.express(name, self.rng.getrandbits(32), payload, key=key)
            if dest is None and pkt is not None:
                self.rounds[pkt.text] = _Round(interest, name, payload, self.world.kernel.now + self.collect_window)
        elif interest.endswith("_data"):
            self.node.reply(interest[:-5], dest, payload, key=key)
        else:
            raise ValueError(f"interest {interest!r} is neither a request nor data")

    def _on_deliver(self, kind, pkt, key):
        service = pkt.name.service
        if kind == INTEREST:
            self.dispatch(service + "_req", pkt.payload, pkt.consumer)
            return
        self.dispatch(service + "_data", pkt.payload, pkt.producer)
        rnd = self.rounds.get(pkt.text)
        if rnd is None or self.closed:
            return
        now = self.world.kernel.now
        if now >= rnd.deadline or rnd.count >= self.max_reexpress:
            del self.rounds[pkt.text]
            return
        rnd.exclude.add(pkt.producer)
        rnd.count += 1
        world = self.world
        exclude = frozenset(rnd.exclude)
        intended = world.intended(rnd.interest, None, self.host.nid) - exclude
        k = world.log.app_send(now, self.host.nid, rnd.interest, len(rnd.payload), self.host.position(), intended)
        self.node.express(rnd.name, self.rng.getrandbits(32), rnd.payload, exclude=exclude, key=k)


@dataclass
class _Round:
    interest: str
    name: object
    payload: bytes
    deadline: int
    exclude: set = field(default_factory=set)
    count: int = 0


# ---------------------------------------------------------------------------
# Traffic light controller


@dataclass
class OccupancyRecord:
    """Vehicles reported entering and leaving one upstream segment.

    A vehicle reported leaving also counts as having entered, so the
    estimate stays consistent when an entering report was lost.
    """

    road_id: int
    capacity: int
    entered: set = field(default_factory=set)
    left: set = field(default_factory=set)

    def add_entering(self, vehicle: int) -> None:
        if vehicle not in self.left:
            self.entered.add(vehicle)

    def add_leaving(self, vehicle: int) -> None:
        self.entered.add(vehicle)
        self.left.add(vehicle)

    @property
    def rate(self) -> float:
        occ = (len(self.entered) - len(self.left)) / self.capacity
        return min(1.0, max(0.0, occ))


def segment_capacity(length: float, vehicle_length: float = 5.0, s0: float = 2.0) -> int:
    return int(math.floor(length / (vehicle_length + s0)))


def phase_split(occ_h: float, occ_v: float, previous: PhasePlan, cycle: float = 60.0, amber: float = 5.0, min_green: float = 10.0):
    """Green split proportional to occupancy within a fixed cycle.

    Returns ``previous`` unchanged when both occupancies are zero.
    """
    total = occ_h + occ_v
    if total <= 0:
        return previous
    green = cycle - 2 * amber
    g_h = green * occ_h / total
    g_h = min(max(g_h, min_green), green - min_green)
    return PhasePlan(green_h=g_h, green_v=green - g_h, amber=amber, offset=previous.offset)


def signal_offset(grid_pos, spacing: float, v0: float, cycle: float) -> float:
    """Green-wave offset: travel time from the grid origin, modulo the cycle."""
    i, j = grid_pos
    return ((i + j) * spacing / v0) % cycle


class TrafficLightController:
    def __init__(self, world, port, intersection, signals, capacity: int, poll: float = 1.0, adjust: float = 300.0, v0: float = 60 / 3.6, spacing: float = 300.0):
        self.world = world
        self.port = port
        self.inter = intersection
        self.signals = signals
        self.poll_period = poll
        self.adjust_period = adjust
        self.records = {road: OccupancyRecord(road, capacity) for road in intersection.incoming.values()}
        self.downstream = {intersection.incoming[a]: intersection.outgoing[a] for a in intersection.incoming}
        self.neighbor_occupancy = {}
        self.neighbor_offsets = {}
        self.seq = 0
        plan = signals.plans[intersection.id]
        plan.offset = signal_offset(intersection.grid, spacing, v0, plan.cycle)
        self.plan_history = [plan]
        for road, down in self.downstream.items():
            port.register(f"vehicle_entering_in_{road}_data", self._on_entering)
            port.register(f"vehicle_leaving_{road}_data", self._on_leaving)
            port.register(f"ack_vehicle_entering_in_{road}_req", self._on_ack_req)
            port.register(f"ack_vehicle_leaving_{road}_req", self._on_ack_req)
        port.register("tlc_occupancy_req", self._on_occupancy_req)
        port.register("tlc_occupancy_data", self._on_occupancy_data)
        port.register("tlc_offset_req", self._on_offset_req)
        port.register("tlc_offset_data", self._on_offset_data)

    def start(self):
        k = self.world.kernel
        self.port.send("tlc_offset_req", SCHEMAS["offset_request"].pack(self.inter.id), None, 0, 0)
        k.schedule_in(int(self.poll_period * 1e9), self.poll, target=self.port.host.nid)
        k.schedule_in(int((self.adjust_period - 5.0) * 1e9), self.share_occupancy, target=self.port.host.nid)
        k.schedule_in(int(self.adjust_period * 1e9), self.adjust, target=self.port.host.nid)

    def occupancy(self, approach: str) -> float:
        return self.records[self.inter.incoming[approach]].rate

    def poll(self):
        req = SCHEMAS["road_request"]
        table = self.world.interest_table
        for road, down in self.downstream.items():
            name = f"vehicle_entering_in_{road}_req"
            self.port.send(name, req.pack(road, self.seq), None, table.direction(name), road)
            name = f"vehicle_leaving_{road}_req"
            self.port.send(name, req.pack(road, self.seq), None, table.direction(name), down)
        self.seq += 1
        self.world.kernel.schedule_in(int(self.poll_period * 1e9), self.poll, target=self.port.host.nid)

    def share_occupancy(self):
        self.port.send("tlc_occupancy_req", SCHEMAS["occupancy_request"].pack(self.inter.id), None, 0, 0)
        self.world.kernel.schedule_in(int(self.adjust_period * 1e9), self.share_occupancy, target=self.port.host.nid)

    def adjust(self):
        now = self.world.kernel.now / 1e9
        prev = self.signals.plans[self.inter.id]
        occ_h = self.occupancy("h")
        occ_v = self.occupancy("v")
        plan = prev
        if self._neighbors_complete():
            plan = phase_split(occ_h, occ_v, prev)
        if plan is not prev:
            self.signals.set_plan(self.inter.id, plan, now)
            self.plan_history.append(plan)
        self.neighbor_occupancy.clear()
        self.world.kernel.schedule_in(int(self.adjust_period * 1e9), self.adjust, target=self.port.host.nid)

    def _neighbors_complete(self) -> bool:
        expected = self.world.grid_neighbors.get(self.inter.id, ())
        return all(n in self.neighbor_occupancy for n in expected)

    # handlers

    def _on_entering(self, interest, payload, src):
        rep = SCHEMAS["vehicle_report"].unpack(payload)
        road = int(interest[len("vehicle_entering_in_"):-len("_data")])
        self.records[road].add_entering(rep.vehicle)

    def _on_leaving(self, interest, payload, src):
        rep = SCHEMAS["vehicle_report"].unpack(payload)
        road = int(interest[len("vehicle_leaving_"):-len("_data")])
        self.records[road].add_leaving(rep.vehicle)

    def _on_ack_req(self, interest, payload, src):
        ack = SCHEMAS["ack"].unpack(payload)
        reply = interest[:-4] + "_data"
        self.port.send(reply, payload, src, self.world.interest_table.direction(reply), ack.road_id)

    def _on_occupancy_req(self, interest, payload, src):
        body = SCHEMAS["occupancy_report"].pack(self.inter.id, self.occupancy("h"), self.occupancy("v"))
        self.port.send("tlc_occupancy_data", body, src, 0, 0)

    def _on_occupancy_data(self, interest, payload, src):
        rep = SCHEMAS["occupancy_report"].unpack(payload)
        self.neighbor_occupancy[rep.intersection] = (rep.occ_h, rep.occ_v)

    def _on_offset_req(self, interest, payload, src):
        plan = self.signals.plans[self.inter.id]
        self.port.send("tlc_offset_data", SCHEMAS["offset_report"].pack(self.inter.id, plan.offset), src, 0, 0)

    def _on_offset_data(self, interest, payload, src):
        rep = SCHEMAS["offset_report"].unpack(payload)
        self.neighbor_offsets[rep.intersection] = rep.offset


# ---------------------------------------------------------------------------
# Driver assistant


SILENCE = 5.0  # s without answering after an acknowledgement


class _ReportState:
    __slots__ = ("stage", "silent_until")

    def __init__(self):
        self.stage = 0  # 0 idle, 1 data sent, 2 ack requested
        self.silent_until = -1


class DriverAssistant:
    """Answers a controller's entering/leaving polls for its own vehicle."""

    def __init__(self, world, port, vehicle, silence: float = SILENCE):
        self.world = world
        self.port = port
        self.vehicle = vehicle
        self.silence = int(silence * 1e9)
        self.road = vehicle.road_id
        self.prev_road = None
        self.states = {}
        self.responses = []  # (t_ns, interest) of every report sent, for auditing
        self._register()

    def _interests(self):
        out = [
            (f"vehicle_entering_in_{self.road}_req", self._on_request),
            (f"ack_vehicle_entering_in_{self.road}_data", self._on_ack),
        ]
        if self.prev_road is not None:
            out += [
                (f"vehicle_leaving_{self.prev_road}_req", self._on_request),
                (f"ack_vehicle_leaving_{self.prev_road}_data", self._on_ack),
            ]
        return out

    def _register(self):
        for interest, handler in self._interests():
            self.port.register(interest, handler)

    def on_road_change(self, new_road: int):
        for interest, _ in self._interests():
            self.port.unregister(interest)
        self.prev_road = self.road
        self.road = new_road
        self.states = {}
        self._register()

    def _state(self, kind):
        st = self.states.get(kind)
        if st is None:
            st = self.states[kind] = _ReportState()
        return st

    def _on_request(self, interest, payload, src):
        now = self.world.kernel.now
        kind = "entering" if interest.startswith("vehicle_entering") else "leaving"
        st = self._state(kind)
        if now < st.silent_until:
            return
        base = interest[:-4]
        road_field = self.road
        table = self.world.interest_table
        veh = self.vehicle
        if st.stage == 1:
            ack = "ack_" + base + "_req"
            self.port.send(ack, SCHEMAS["ack"].pack(veh.vid, road_field), src, table.direction(ack), road_field)
            st.stage = 2
            return
        x, y = veh.position
        data = base + "_data"
        self.port.send(data, SCHEMAS["vehicle_report"].pack(veh.vid, road_field, x, y), src, table.direction(data), road_field)
        self.responses.append((now, data))
        st.stage = 1

    def _on_ack(self, interest, payload, src):
        kind = "entering" if interest.startswith("ack_vehicle_entering") else "leaving"
        st = self._state(kind)
        st.stage = 0
        st.silent_until = self.world.kernel.now + self.silence


# ---------------------------------------------------------------------------
# Obstacle notifier


class ObstacleNotifier:
    def __init__(self, world, port, road_id: int, obstacle_xy, speed_limit: float):
        self.world = world
        self.port = port
        self.road_id = road_id
        self.obstacle_xy = obstacle_xy
        self.speed_limit = speed_limit
        self.answered = 0
        port.register("obstacle_req", self._on_request)

    def _on_request(self, interest, payload, src):
        req = SCHEMAS["obstacle_request"].unpack(payload)
        if req.road_id != self.road_id:
            return
        body = SCHEMAS["obstacle_report"].pack(self.road_id, self.obstacle_xy[0], self.obstacle_xy[1], self.speed_limit)
        self.port.send("obstacle_data", body, src, self.world.interest_table.direction("obstacle_data"), self.road_id)
        self.answered += 1


# ---------------------------------------------------------------------------
# Cooperative adaptive cruise control


K_GAP = 0.5  # 1/s
MAX_MISSES = 3


def cacc_speed_command(v_leader: float, gap: float, v: float, s0: float, T: float, k_gap: float = K_GAP) -> float:
    """Constant-time-gap law ``v_leader + k (gap - (s0 + T v))``."""
    return v_leader + k_gap * (gap - (s0 + T * v))


class CooperativeCruise:
    """Finds the vehicle ahead over the network and tracks its speed."""

    def __init__(self, world, port, vehicle, request_period: float = 1.0, discovery_period: float = 1.0, state_rate: float = 10.0):
        self.world = world
        self.port = port
        self.vehicle = vehicle
        self.request_period = int(request_period * 1e9)
        self.discovery_period = int(discovery_period * 1e9)
        self.state_period = int(round(1e9 / state_rate))
        self.informed = False
        self.informed_at = None
        self.leader = None
        self.leader_s = None
        self.awaiting = False
        self.misses = 0
        self.seq = 0
        self.active = True
        port.register("obstacle_data", self._on_obstacle)
        port.register("presence_req", self._on_presence_req)
        port.register("presence_data", self._on_presence_data)
        port.register("state_req", self._on_state_req)
        port.register("state_data", self._on_state_data)

    def start(self):
        self._request_obstacle()

    def stop(self):
        self.active = False
        self.vehicle.cacc_speed = None

    def _at(self, delay, fn):
        self.world.kernel.schedule_in(delay, fn, target=self.port.host.nid)

    def _request_obstacle(self):
        if not self.active or self.informed:
            return
        x, y = self.vehicle.position
        road = self.vehicle.road_id
        self.port.send("obstacle_req", SCHEMAS["obstacle_request"].pack(road, x, y), None, self.world.interest_table.direction("obstacle_req"), road)
        self._at(self.request_period, self._request_obstacle)

    def _on_obstacle(self, interest, payload, src):
        if self.informed or not self.active:
            return
        self.informed = True
        self.informed_at = self.world.kernel.now
        self._discover()
        self._poll_state()

    def _discover(self):
        if not self.active:
            return
        x, y = self.vehicle.position
        road = self.vehicle.road_id
        self.port.send("presence_req", SCHEMAS["presence_request"].pack(road, x, y), None, 0, road)
        self._at(self.discovery_period, self._discover)

    def _poll_state(self):
        if not self.active:
            return
        if self.leader is not None:
            if self.awaiting:
                self.misses += 1
                if self.misses >= MAX_MISSES:
                    self.leader = None
                    self.vehicle.cacc_speed = None
                    self.misses = 0
            if self.leader is not None:
                road = self.vehicle.road_id
                self.port.send(
                    "state_req", SCHEMAS["state_request"].pack(self.vehicle.vid, self.seq), self.leader,
                    self.world.interest_table.direction("state_req"), road,
                )
                self.seq += 1
                self.awaiting = True
        self._at(self.state_period, self._poll_state)

    def _on_presence_req(self, interest, payload, src):
        veh = self.vehicle
        body = SCHEMAS["presence_report"].pack(veh.vid, veh.road_id, veh.x, veh.v)
        self.port.send("presence_data", body, src, 0, veh.road_id)

    def _on_presence_data(self, interest, payload, src):
        rep = SCHEMAS["presence_report"].unpack(payload)
        me = self.vehicle
        if rep.road_id != me.road_id or rep.s <= me.x:
            return
        if self.leader_s is None or self.leader is None or rep.s < self.leader_s or src == self.leader:
            if self.leader != src:
                self.misses = 0
                self.awaiting = False
            self.leader = src
            self.leader_s = rep.s

    def _on_state_req(self, interest, payload, src):
        veh = self.vehicle
        body = SCHEMAS["state_report"].pack(veh.vid, veh.road_id, veh.x, veh.v, veh.acc)
        self.port.send("state_data", body, src, self.world.interest_table.direction("state_data"), veh.road_id)

    def _on_state_data(self, interest, payload, src):
        if src != self.leader:
            return
        rep = SCHEMAS["state_report"].unpack(payload)
        me = self.vehicle
        self.awaiting = False
        self.misses = 0
        self.leader_s = rep.s
        gap = rep.s - me.params.length - me.x
        v_cmd = cacc_speed_command(rep.speed, gap, me.v, me.params.s0, me.params.T)
        me.cacc_speed = max(0.0, v_cmd)
