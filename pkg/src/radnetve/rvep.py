"""RAdNet-VE: road-scoped, direction-gated interest forwarding.

Compared with RAdNet, every message carries the source position, a
propagation direction and a road id. A receiver only forwards when it is
on that road, lies on the requested side of the source and is the farthest
known neighbour from the source (within half the radio range). Forwarding
waits ``u / dist`` seconds so far receivers go first, and the wait is
abandoned when another copy of the same message is overheard.
"""
from __future__ import annotations

from typing import Optional

from .core import (
    VE_HEADER_BYTES,
    GeoPosition,
    MalformedHeaderError,
    NodePrefix,
    VeMessage,
    decode_header,
    encode_header,
    prefix_match,
)
from .radio import Frame
from .rp import Action, ProtocolNode
from .simkernel import seconds

MAX_FORWARD_DELAY = 0.05  # s
POS_TABLE_TTL = 5.0  # s
PROTOCOL_MAX_HOPS = 50


def forwarding_delay(dist: float, rng, max_delay: float = MAX_FORWARD_DELAY, u: Optional[float] = None) -> float:
    """``u / dist`` seconds with ``u ~ U(0, 1)``, clamped to ``max_delay``.

    A zero (or negative) distance returns ``max_delay``.
    """
    if u is None:
        u = rng.random()
    if dist <= 0:
        return max_delay
    return min(u / dist, max_delay)


class VeNode(ProtocolNode):
    def __init__(
        self,
        host,
        prefix: NodePrefix,
        medium,
        roads,
        max_hops: int = PROTOCOL_MAX_HOPS,
        radio_range: Optional[float] = None,
        cancel_on_overhear: bool = True,
        pos_ttl: float = POS_TABLE_TTL,
        max_delay: float = MAX_FORWARD_DELAY,
        rng=None,
        uniform=None,
        **kw,
    ):
        super().__init__(host, prefix, medium, **kw)
        self.roads = roads
        self.max_hops = max_hops
        self.radio_range = medium.profile.range if radio_range is None else radio_range
        self.cancel_on_overhear = cancel_on_overhear
        self.pos_ttl = seconds(pos_ttl)
        self.max_delay = max_delay
        self.rng = rng if rng is not None else self.kernel.streams["forwarding"]
        # optional source of u draws, used by tests to pin the wait
        self.uniform = uniform
        self.interests = {}
        self.pos_table = {}  # src prefix -> (x, y, t_ns)
        self.pending = {}  # (src prefix, id) -> Event

    def register_interest(self, interest: int, max_hops: int = PROTOCOL_MAX_HOPS) -> None:
        if max_hops < 0:
            raise ValueError("max_hops must be non-negative")
        self.interests[interest] = max_hops

    def unregister_interest(self, interest: int) -> None:
        self.interests.pop(interest, None)

    def send(
        self,
        interest: int,
        payload: bytes = b"",
        dest: Optional[NodePrefix] = None,
        direction: int = 0,
        road_id: int = 0,
        key: int = -1,
    ) -> VeMessage:
        pos = self.host.position()
        msg = VeMessage(
            message_id=self.sent,
            src_prefix=self.prefix,
            interest=interest,
            position=GeoPosition.from_meters(pos[0], pos[1]),
            direction=direction,
            road_id=road_id,
            dest_prefix=dest,
            hop_count=0,
            payload=bytes(payload),
        )
        self.id_table[self.prefix].add(msg.message_id)
        self._transmit(msg, key, pos)
        self.sent += 1
        return msg

    def _transmit(self, msg: VeMessage, key: int, origin):
        body = encode_header(msg) if self.wire else msg
        bits = 8 * (VE_HEADER_BYTES + len(msg.payload))
        frame = Frame(body, bits, self.host.nid, key=key, hop=msg.hop_count + 1, origin=origin)
        self.medium.broadcast(self.host.nid, frame)

    def neighbor_positions(self):
        """Fresh posTable entries as ``{prefix: (x, y)}``."""
        horizon = self.kernel.now - self.pos_ttl
        return {p: (x, y) for p, (x, y, t) in self.pos_table.items() if t >= horizon}

    def on_frame(self, frame: Frame) -> Action:
        msg = frame.msg
        key = frame.key
        if not isinstance(msg, VeMessage):
            try:
                msg = decode_header(msg, self.n_fields, self.m)
            except MalformedHeaderError:
                self._drop(key, "malformed")
                return Action.DISCARD
        now = self.kernel.now
        src = msg.src_prefix
        seen = self.id_table[src]
        mkey = (src, msg.message_id)
        if msg.message_id in seen:
            ev = self.pending.pop(mkey, None) if self.cancel_on_overhear else None
            if ev is not None:
                ev.cancel()
                self._drop(key, "suppressed")
            self._drop(key, "duplicate")
            self._record(key, Action.DISCARD, msg.hop_count + 1)
            return Action.DISCARD
        seen.add(msg.message_id)
        hop = msg.hop_count + 1
        sx = msg.position.longitude / 1000.0
        sy = msg.position.latitude / 1000.0
        if hop == 1:
            self.pos_table[src] = (sx, sy, now)
        if msg.road_id not in self.host.road_ids:
            self._drop(key, "road")
            self._record(key, Action.DISCARD, hop)
            return Action.DISCARD

        seg = self.roads.segment(msg.road_id)
        ux, uy = seg.ux, seg.uy
        x0, y0 = seg.start
        s_src = (sx - x0) * ux + (sy - y0) * uy
        px, py = self.host.position()
        d_self = ((px - x0) * ux + (py - y0) * uy) - s_src
        positioning = -1 if d_self * self.host.heading < 0 else 1
        direction = msg.direction
        dist = abs(d_self)
        fwd_self = True
        half = self.radio_range / 2.0
        horizon = now - self.pos_ttl
        stale = None
        for nb, (nx, ny, t) in self.pos_table.items():
            if t < horizon:
                if stale is None:
                    stale = []
                stale.append(nb)
                continue
            d_nb = ((nx - x0) * ux + (ny - y0) * uy) - s_src
            if (-1 if d_nb < 0 else 1) == direction:
                nd = abs(d_nb)
                if nd > dist and nd <= half:
                    fwd_self = False
                    dist = nd
        if stale:
            for nb in stale:
                del self.pos_table[nb]

        max_h = self.interests.get(msg.interest)
        intrst = max_h is not None
        dest = msg.dest_prefix
        prfx = dest is None or prefix_match(self.prefix, src) > 0
        pos_ok = positioning == direction or direction == 0
        deliver = intrst and pos_ok and (dest is None or dest == self.prefix)
        forward = False
        reason = "no_match"
        if prfx or intrst:
            fwd_msg = dest is None or dest != self.prefix
            node_pos = fwd_self and pos_ok
            fwd_hops = hop < (max_h if intrst else self.max_hops)
            forward = fwd_msg and node_pos and fwd_hops
            reason = "hop_limit" if not fwd_hops else "not_selected"
        action = Action.of(deliver, forward)
        self._record(key, action, hop)
        if deliver:
            self._deliver(msg, key)
        if forward:
            u = self.uniform() if self.uniform is not None else None
            wait = forwarding_delay(dist, self.rng, self.max_delay, u)
            out = VeMessage(
                msg.message_id,
                src,
                msg.interest,
                msg.position,
                direction,
                msg.road_id,
                dest,
                hop,
                msg.payload,
                msg.version,
                msg.header_length,
            )
            self.pending[mkey] = self.kernel.schedule(
                now + seconds(wait), self._forward, mkey, out, key, frame.origin, target=self.host.nid
            )
        elif not deliver:
            self._drop(key, reason)
        return action

    def _forward(self, mkey, msg: VeMessage, key: int, origin):
        self.pending.pop(mkey, None)
        if self.log is not None:
            self.log.forward(self.kernel.now, self.host.nid, key, msg.hop_count)
        self._transmit(msg, key, origin)
