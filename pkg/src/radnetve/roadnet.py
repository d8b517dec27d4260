"""Road geometry, car-following mobility and signal actuation.

Roads are straight directed segments identified by a 32-bit ``road_id``.
Vehicles drive along *corridors* (ordered chains of segments) without
overtaking, so the vehicle ahead in a corridor is always the leader.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .simkernel import seconds

log = logging.getLogger(__name__)

KMH = 1 / 3.6


class UnknownRoadError(KeyError):
    pass


# ---------------------------------------------------------------------------
# Intelligent Driver Model


@dataclass(frozen=True)
class IDMParams:
    v0: float = 60 * KMH  # desired speed, m/s
    T: float = 1.2  # time headway, s
    s0: float = 2.0  # minimum gap, m
    a: float = 1.0  # maximum acceleration, m/s^2
    b: float = 3.0  # comfortable deceleration, m/s^2
    delta: float = 4.0
    b_max: float = 9.0  # emergency deceleration bound
    length: float = 5.0  # vehicle length, m


SCENARIO_IDM = {
    "grid": IDMParams(v0=60 * KMH),
    "highway": IDMParams(v0=80 * KMH),
}


def idm_accelerate(v: float, gap: float, dv: float, p: IDMParams, v0: Optional[float] = None) -> float:
    """IDM acceleration clamped to ``[-b_max, a]``.

    ``gap`` is the net bumper-to-bumper distance (``math.inf`` without a
    leader) and ``dv = v - v_leader``. ``v0`` overrides the desired speed,
    e.g. inside a lower speed-limit zone.
    """
    v0 = p.v0 if v0 is None else v0
    free = 1.0 - (v / v0) ** p.delta if v0 > 0 else -1.0
    if gap == math.inf:
        acc = p.a * free
    elif gap <= 0:
        log.debug("non-positive gap %.3f m, emergency braking", gap)
        return -p.b_max
    else:
        s_star = p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b)))
        acc = p.a * (free - (s_star / gap) ** 2)
    return min(p.a, max(-p.b_max, acc))


def idm_equilibrium_gap(v: float, p: IDMParams) -> float:
    """Steady-state gap for speed ``v`` behind a leader at the same speed."""
    s_star = p.s0 + v * p.T
    return s_star / math.sqrt(1.0 - (v / p.v0) ** p.delta)


# ---------------------------------------------------------------------------
# Geometry


def _xy(p):
    if hasattr(p, "longitude"):
        return p.longitude / 1000.0, p.latitude / 1000.0
    return p[0], p[1]


@dataclass
class Segment:
    road_id: int
    start: tuple
    end: tuple
    speed_limit: float

    def __post_init__(self):
        dx = self.end[0] - self.start[0]
        dy = self.end[1] - self.start[1]
        self.length = math.hypot(dx, dy)
        if self.length <= 0:
            raise ValueError(f"segment {self.road_id} has zero length")
        self.ux = dx / self.length
        self.uy = dy / self.length

    def project(self, p) -> float:
        """Arc-length coordinate of ``p`` along the segment axis (unclamped)."""
        x, y = _xy(p)
        return (x - self.start[0]) * self.ux + (y - self.start[1]) * self.uy

    def point(self, s: float) -> tuple:
        return (self.start[0] + self.ux * s, self.start[1] + self.uy * s)


@dataclass
class Intersection:
    id: int
    position: tuple
    grid: tuple = (0, 0)
    incoming: dict = field(default_factory=dict)  # approach ("h"/"v") -> road_id
    outgoing: dict = field(default_factory=dict)


@dataclass
class StopLine:
    x: float  # corridor coordinate of the stop line
    intersection: int
    approach: str


@dataclass
class Corridor:
    """Ordered chain of segments travelled in one direction."""

    id: int
    road_ids: list
    segments: list
    approach: str = "h"
    stop_lines: list = field(default_factory=list)
    zones: list = field(default_factory=list)  # (x_start, x_end, limit)

    def __post_init__(self):
        self.offsets = [0.0]
        for seg in self.segments:
            self.offsets.append(self.offsets[-1] + seg.length)
        self.length = self.offsets[-1]

    def locate(self, x: float) -> int:
        """Index of the segment containing corridor coordinate ``x``."""
        i = bisect.bisect_right(self.offsets, x) - 1
        return min(max(i, 0), len(self.segments) - 1)

    def point(self, x: float) -> tuple:
        i = self.locate(x)
        return self.segments[i].point(x - self.offsets[i])

    def speed_limit(self, x: float) -> float:
        limit = self.segments[self.locate(x)].speed_limit
        for x0, x1, zone_limit in self.zones:
            if x0 <= x <= x1:
                limit = min(limit, zone_limit)
        return limit


class RoadNetwork:
    def __init__(self, segments, corridors=(), intersections=(), kind="custom"):
        self.segments = {}
        for seg in segments:
            if seg.road_id in self.segments:
                raise ValueError(f"duplicate road_id {seg.road_id}")
            self.segments[seg.road_id] = seg
        self.corridors = list(corridors)
        self.intersections = list(intersections)
        self.kind = kind

    def segment(self, road_id: int) -> Segment:
        try:
            return self.segments[road_id]
        except KeyError:
            raise UnknownRoadError(road_id) from None

    def positioning(self, node_pos, src_pos, road_id: int, heading: int = 1) -> int:
        """-1 when the node is behind the source along the road, else +1.

        ``heading`` is the node's travel sign relative to the segment's
        canonical direction (road-side units use +1). Equal projections
        resolve to +1.
        """
        seg = self.segment(road_id)
        d = (seg.project(node_pos) - seg.project(src_pos)) * heading
        return -1 if d < 0 else 1

    def road_distance(self, a, b, road_id: int) -> float:
        seg = self.segment(road_id)
        return abs(seg.project(a) - seg.project(b))

    @property
    def diameter(self) -> float:
        xs, ys = [], []
        for seg in self.segments.values():
            xs += [seg.start[0], seg.end[0]]
            ys += [seg.start[1], seg.end[1]]
        return math.hypot(max(xs) - min(xs), max(ys) - min(ys))


def grid_network(blocks: int = 2, spacing: float = 300.0, speed_limit: float = 60 * KMH) -> RoadNetwork:
    """Lattice of ``(blocks+1)^2`` intersections ``spacing`` metres apart.

    Every row and column is a one-way corridor (alternating direction) with
    a lead-in and an exit segment of ``spacing`` metres, so each
    intersection has one upstream segment per approach.
    """
    n = blocks + 1
    segments, corridors = [], []
    inters = {}
    for j in range(n):
        for i in range(n):
            inters[(i, j)] = Intersection(id=j * n + i, position=(i * spacing, j * spacing), grid=(i, j))
    next_id = 1

    def chain(points, approach, cells):
        nonlocal next_id
        segs = []
        for k in range(len(points) - 1):
            segs.append(Segment(next_id, points[k], points[k + 1], speed_limit))
            next_id += 1
        corr = Corridor(len(corridors), [s.road_id for s in segs], segs, approach)
        # points[1..n] are intersections; the segment ending at each is its upstream
        for k, cell in enumerate(cells):
            inter = inters[cell]
            inter.incoming[approach] = segs[k].road_id
            inter.outgoing[approach] = segs[k + 1].road_id
            corr.stop_lines.append(StopLine(corr.offsets[k + 1], inter.id, approach))
        segments.extend(segs)
        corridors.append(corr)

    for j in range(n):
        cells = [(i, j) for i in range(n)]
        if j % 2 == 1:
            cells.reverse()
        xs = [inters[c].position[0] for c in cells]
        step = spacing if j % 2 == 0 else -spacing
        points = [(xs[0] - step, j * spacing)] + [inters[c].position for c in cells] + [(xs[-1] + step, j * spacing)]
        chain(points, "h", cells)
    for i in range(n):
        cells = [(i, j) for j in range(n)]
        if i % 2 == 1:
            cells.reverse()
        ys = [inters[c].position[1] for c in cells]
        step = spacing if i % 2 == 0 else -spacing
        points = [(i * spacing, ys[0] - step)] + [inters[c].position for c in cells] + [(i * spacing, ys[-1] + step)]
        chain(points, "v", cells)
    ordered = [inters[(i, j)] for j in range(n) for i in range(n)]
    return RoadNetwork(segments, corridors, ordered, kind="grid")


def highway_network(
    length: float = 2000.0,
    speed_limit: float = 80 * KMH,
    obstacle_length: float = 10.0,
    obstacle_speed: float = 20 * KMH,
) -> RoadNetwork:
    """Single straight segment with a slow obstacle zone at its far end."""
    seg = Segment(1, (0.0, 0.0), (length, 0.0), speed_limit)
    corr = Corridor(0, [1], [seg], "h", zones=[(length - obstacle_length, length, obstacle_speed)])
    return RoadNetwork([seg], [corr], [], kind="highway")


# ---------------------------------------------------------------------------
# Signals


@dataclass
class PhasePlan:
    """Two-phase fixed cycle: horizontal green, amber, vertical green, amber."""

    green_h: float = 25.0
    green_v: float = 25.0
    amber: float = 5.0
    offset: float = 0.0

    @property
    def cycle(self) -> float:
        return self.green_h + self.green_v + 2 * self.amber

    def state(self, approach: str, t: float) -> str:
        """'G', 'Y' or 'R' for ``approach`` at simulated time ``t`` (s)."""
        u = (t - self.offset) % self.cycle
        h_end = self.green_h
        if approach == "h":
            if u < h_end:
                return "G"
            return "Y" if u < h_end + self.amber else "R"
        v_start = h_end + self.amber
        if u < v_start:
            return "R"
        if u < v_start + self.green_v:
            return "G"
        return "Y"


class SignalBoard:
    """Per-intersection phase plans; new plans take effect at a cycle boundary."""

    def __init__(self, intersections, plan_factory=PhasePlan):
        self.plans = {inter.id: plan_factory() for inter in intersections}
        self._pending = {}

    def state(self, inter_id: int, approach: str, t: float) -> str:
        pending = self._pending.get(inter_id)
        if pending is not None and t >= pending[0]:
            self.plans[inter_id] = pending[1]
            del self._pending[inter_id]
        return self.plans[inter_id].state(approach, t)

    def set_plan(self, inter_id: int, plan: PhasePlan, t: float) -> float:
        """Queue ``plan`` for the start of the next cycle after ``t``; return that time."""
        cur = self.plans[inter_id]
        k = math.floor((t - cur.offset) / cur.cycle) + 1
        start = cur.offset + k * cur.cycle
        plan.offset = start % plan.cycle
        self._pending[inter_id] = (start, plan)
        return start


# ---------------------------------------------------------------------------
# Vehicles and traffic


@dataclass
class VehicleState:
    vid: int
    corridor: Corridor
    x: float  # corridor coordinate, m
    v: float
    params: IDMParams
    acc: float = 0.0
    road_id: int = 0
    heading: int = 1
    spawn_time: float = 0.0
    cacc_speed: Optional[float] = None
    node: object = None
    _seg: int = 0
    _pass: float = -1.0
    _hold: float = -1.0

    @property
    def segment(self) -> Segment:
        return self.corridor.segments[self._seg]

    @property
    def s(self) -> float:
        """Position along the current segment."""
        return self.x - self.corridor.offsets[self._seg]

    @property
    def position(self) -> tuple:
        return self.corridor.segments[self._seg].point(self.s)


def spawn_flow(rate: float, rng, t_end: float, t_start: float = 0.0):
    """Yield exponential arrival times (s) with mean headway ``3600 / rate``."""
    if rate <= 0:
        raise ValueError("flow rate must be positive")
    mean = 3600.0 / rate
    t = t_start
    while True:
        t += rng.expovariate(1.0 / mean)
        if t > t_end:
            return
        yield t


class Traffic:
    """Fixed-step IDM integration of every vehicle, driven by the kernel.

    ``on_spawn(vehicle)``, ``on_road_change(vehicle, old_road)`` and
    ``on_despawn(vehicle)`` let the scenario attach network nodes.
    """

    def __init__(
        self,
        kernel,
        network: RoadNetwork,
        params: IDMParams,
        signals: Optional[SignalBoard] = None,
        dt: float = 0.1,
        on_spawn: Optional[Callable] = None,
        on_road_change: Optional[Callable] = None,
        on_despawn: Optional[Callable] = None,
        on_step: Optional[Callable] = None,
    ):
        self.kernel = kernel
        self.network = network
        self.params = params
        self.signals = signals
        self.dt = dt
        self._dt_ns = seconds(dt)
        self.on_spawn = on_spawn
        self.on_road_change = on_road_change
        self.on_despawn = on_despawn
        self.on_step = on_step
        self.lanes = {c.id: [] for c in network.corridors}
        self.waiting = {c.id: [] for c in network.corridors}
        self.vehicles = {}
        self.spawned = 0
        self.despawned = 0
        self.collisions = 0
        self.min_gap = math.inf
        self.spawn_log = []
        self._next_vid = 0
        self._started = False

    # -- flows -------------------------------------------------------------

    def add_flow(self, corridor: Corridor, rate: float, rng, t_end: float) -> int:
        count = 0
        for t in spawn_flow(rate, rng, t_end):
            self.kernel.schedule(seconds(t), self._arrive, corridor.id, target="traffic")
            count += 1
        return count

    def start(self):
        if not self._started:
            self._started = True
            self.kernel.schedule(self.kernel.now, self._tick, target="traffic")

    def _arrive(self, cid: int):
        self.waiting[cid].append(self.kernel.now / 1e9)
        self._try_insert(cid)

    def _try_insert(self, cid: int):
        corridor = self.network.corridors[cid]
        lane = self.lanes[cid]
        p = self.params
        while self.waiting[cid]:
            v = min(p.v0, corridor.speed_limit(0.0))
            if lane:
                last = lane[-1]
                gap = last.x - last.params.length
                if gap < p.s0 + 1.0:
                    return
                v = min(v, max(0.0, (gap - p.s0) / p.T), last.v + 2.0)
            self.waiting[cid].pop(0)
            veh = VehicleState(self._next_vid, corridor, 0.0, v, p, spawn_time=self.kernel.now / 1e9)
            veh.road_id = corridor.road_ids[0]
            self._next_vid += 1
            lane.append(veh)
            self.vehicles[veh.vid] = veh
            self.spawned += 1
            self.spawn_log.append((self.kernel.now, cid, veh.vid))
            if self.on_spawn:
                self.on_spawn(veh)

    # -- integration -------------------------------------------------------

    def _stop_constraint(self, veh: VehicleState, t: float):
        """Gap to a stop line the vehicle must respect, or ``None``."""
        if self.signals is None:
            return None
        for line in veh.corridor.stop_lines:
            if line.x <= veh.x:
                continue
            state = self.signals.state(line.intersection, line.approach, t)
            if state == "G":
                veh._pass = veh._hold = -1.0
                return None
            if veh._pass == line.x:
                return None
            if veh._hold != line.x:
                dist = line.x - veh.x
                if dist - veh.params.s0 >= veh.v * veh.v / (2 * veh.params.b):
                    veh._hold = line.x
                else:
                    veh._pass = line.x
                    return None
            return line.x - veh.x
        return None

    def acceleration(self, veh: VehicleState, leader: Optional[VehicleState], t: float) -> float:
        p = veh.params
        corridor = veh.corridor
        v0 = min(p.v0, corridor.speed_limit(veh.x))
        if leader is not None:
            gap = leader.x - leader.params.length - veh.x
            acc = idm_accelerate(veh.v, gap, veh.v - leader.v, p, v0)
        else:
            acc = idm_accelerate(veh.v, math.inf, 0.0, p, v0)
        stop_gap = self._stop_constraint(veh, t)
        if stop_gap is not None:
            acc = min(acc, idm_accelerate(veh.v, stop_gap, veh.v, p, v0))
        for x0, _x1, limit in corridor.zones:
            if x0 > veh.x and veh.v > limit:
                dist = x0 - veh.x
                need = (veh.v * veh.v - limit * limit) / (2.0 * max(dist, 0.5))
                if need >= 0.5 * p.b:
                    acc = min(acc, -min(need, p.b_max))
        if veh.cacc_speed is not None:
            target = min(max(veh.cacc_speed, 0.0), v0)
            acc = min(acc, max(-p.b, min(p.a, (target - veh.v) / self.dt)))
        return acc

    def _tick(self):
        t = self.kernel.now / 1e9
        dt = self.dt
        for cid, lane in self.lanes.items():
            if not lane:
                continue
            accs = []
            leader = None
            for veh in lane:
                accs.append(self.acceleration(veh, leader, t))
                leader = veh
            for veh, acc in zip(lane, accs):
                v_new = max(0.0, veh.v + acc * dt)
                veh.x += 0.5 * (veh.v + v_new) * dt
                veh.v = v_new
                veh.acc = acc
            leader = None
            for veh in lane:
                if leader is not None:
                    gap = leader.x - leader.params.length - veh.x
                    if gap < self.min_gap:
                        self.min_gap = gap
                    if gap <= 0:
                        self.collisions += 1
                        log.warning("rear-end collision between %d and %d", leader.vid, veh.vid)
                leader = veh
            while lane and lane[0].x >= lane[0].corridor.length:
                self._despawn(lane.pop(0))
            for veh in lane:
                seg = veh.corridor.locate(veh.x)
                if seg != veh._seg:
                    old = veh.road_id
                    veh._seg = seg
                    veh.road_id = veh.corridor.road_ids[seg]
                    if self.on_road_change:
                        self.on_road_change(veh, old)
        for cid in self.waiting:
            if self.waiting[cid]:
                self._try_insert(cid)
        if self.on_step:
            self.on_step()
        self.kernel.schedule_in(self._dt_ns, self._tick, target="traffic")

    def _despawn(self, veh: VehicleState):
        self.vehicles.pop(veh.vid, None)
        self.despawned += 1
        if self.on_despawn:
            self.on_despawn(veh)
