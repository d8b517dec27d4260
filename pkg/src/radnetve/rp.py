"""RAdNet: interest/prefix matched flooding with a decrementing hop limit."""
from __future__ import annotations

from collections import defaultdict
from enum import Enum
from typing import Optional

from .core import (
    R_HEADER_BYTES,
    MalformedHeaderError,
    NodePrefix,
    RMessage,
    decode_rheader,
    encode_rheader,
    prefix_match,
)
from .radio import Frame


class Action(str, Enum):
    DISCARD = "discard"
    DELIVER = "deliver"
    DELIVER_FORWARD = "deliver+forward"
    FORWARD = "forward"

    @classmethod
    def of(cls, deliver: bool, forward: bool) -> "Action":
        if deliver:
            return cls.DELIVER_FORWARD if forward else cls.DELIVER
        return cls.FORWARD if forward else cls.DISCARD


class ProtocolNode:
    """Plumbing shared by the prefix-based protocols.

    ``host`` exposes ``nid`` (medium id), ``position()`` in planar metres,
    ``road_ids`` and ``heading``. ``on_deliver(interest_code, payload,
    src_prefix, key)`` receives application copies.
    """

    def __init__(self, host, prefix: NodePrefix, medium, log=None, wire=False, decisions=None):
        self.host = host
        self.prefix = prefix
        self.medium = medium
        self.kernel = medium.kernel
        self.log = log
        self.wire = wire
        self.decisions = decisions
        self.id_table = defaultdict(set)
        self.sent = 0
        self.on_deliver = None
        self.n_fields = prefix.n
        self.m = prefix.m

    @property
    def nid(self) -> int:
        return self.host.nid

    def _record(self, key, action, hop):
        if self.decisions is not None:
            self.decisions.append((self.kernel.now, self.host.nid, key, action.value, hop))

    def _drop(self, key, reason):
        if self.log is not None:
            self.log.drop(self.kernel.now, self.host.nid, key, reason)

    def _deliver(self, msg, key):
        if self.log is not None:
            self.log.app_deliver(self.kernel.now, self.host.nid, key)
        if self.on_deliver is not None:
            self.on_deliver(msg.interest, msg.payload, msg.src_prefix, key)


class RpNode(ProtocolNode):
    """Per-node state machine for the original RAdNet protocol."""

    def __init__(self, host, prefix, medium, hop_limit: int = 5, **kw):
        super().__init__(host, prefix, medium, **kw)
        self.hop_limit = hop_limit
        self.interests = set()

    def register_interest(self, interest: int, max_hops: Optional[int] = None) -> None:
        # RAdNet has no per-interest hop budget; max_hops is accepted for a uniform API
        self.interests.add(interest)

    def unregister_interest(self, interest: int) -> None:
        self.interests.discard(interest)

    def send(self, interest: int, payload: bytes = b"", dest: Optional[NodePrefix] = None, key: int = -1) -> RMessage:
        msg = RMessage(self.sent, self.prefix, interest, self.hop_limit, dest, bytes(payload))
        self.sent += 1
        self.id_table[self.prefix].add(msg.message_id)
        self._transmit(msg, key, 1, self.host.position())
        return msg

    def _transmit(self, msg: RMessage, key: int, hop: int, origin):
        body = encode_rheader(msg) if self.wire else msg
        bits = 8 * (R_HEADER_BYTES + len(msg.payload))
        self.medium.broadcast(self.host.nid, Frame(body, bits, self.host.nid, key=key, hop=hop, origin=origin))

    def on_frame(self, frame: Frame) -> Action:
        msg = frame.msg
        key = frame.key
        if not isinstance(msg, RMessage):
            try:
                msg = decode_rheader(msg, self.n_fields, self.m)
            except MalformedHeaderError:
                self._drop(key, "malformed")
                return Action.DISCARD
        seen = self.id_table[msg.src_prefix]
        if msg.message_id in seen:
            self._drop(key, "duplicate")
            self._record(key, Action.DISCARD, frame.hop)
            return Action.DISCARD
        seen.add(msg.message_id)
        remaining = msg.hop_limit - 1
        intrst = msg.interest in self.interests
        prfx = msg.dest_prefix is None or prefix_match(self.prefix, msg.src_prefix) > 0
        deliver = intrst and (msg.dest_prefix is None or msg.dest_prefix == self.prefix)
        forward = (prfx or intrst) and remaining > 0
        action = Action.of(deliver, forward)
        self._record(key, action, frame.hop)
        if deliver:
            self._deliver(msg, key)
        if forward:
            out = RMessage(
                msg.message_id, msg.src_prefix, msg.interest, remaining, msg.dest_prefix, msg.payload, msg.version, msg.header_length
            )
            if self.log is not None:
                self.log.forward(self.kernel.now, self.host.nid, key, frame.hop)
            self._transmit(out, key, frame.hop + 1, frame.origin)
        elif not deliver:
            self._drop(key, "hop_limit" if (prfx or intrst) else "no_match")
        return action
