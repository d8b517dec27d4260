"""Content-centric baselines without caching.

``CcnNode(mode="reactive")`` floods Interests within a hop limit, leaves a
PIT breadcrumb per forwarded Interest and returns Data hop by hop along the
breadcrumbs, consuming them. ``mode="proactive"`` delays every rebroadcast
(Interest and Data) by ``K / d``, with ``d`` the distance to the previous
transmitter, cancels the rebroadcast when the same packet is overheard and
lets Data flood within its hop limit instead of following breadcrumbs.

Packet encoding (simulator-internal, big-endian)::

    kind u8 | name_len u16 | name | nonce u32 | hop_limit u8 | prev_hop u32
    | producer u32 | n_targets u8 | targets u32* | n_exclude u8 | exclude u32*
    | payload_len u16 | payload

Names follow ``uri://<provider>/<road>/<dir>/<section>/<app>/<service>``
optionally followed by ``/<dest node id>``.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import Optional

from .radio import Frame
from .rp import Action
from .simkernel import seconds

INTEREST = 0
DATA = 1
APP = -1  # PIT in-link standing for the local application

PIT_LIFETIME = 2.0  # s
PIT_CAPACITY = 4096
MAX_TIMER = 0.05  # s

_FIXED = struct.Struct(">BH")


@dataclass(frozen=True)
class CcnName:
    provider: str
    road: int
    direction: int
    section: int
    app: str
    service: str
    dest: Optional[int] = None

    def __str__(self) -> str:
        base = f"uri://{self.provider}/{self.road}/{self.direction}/{self.section}/{self.app}/{self.service}"
        return base if self.dest is None else f"{base}/{self.dest}"

    @classmethod
    def parse(cls, text: str) -> "CcnName":
        if not text.startswith("uri://"):
            raise ValueError(f"not a data name: {text!r}")
        parts = text[len("uri://"):].split("/")
        if len(parts) not in (6, 7):
            raise ValueError(f"malformed data name: {text!r}")
        dest = int(parts[6]) if len(parts) == 7 else None
        return cls(parts[0], int(parts[1]), int(parts[2]), int(parts[3]), parts[4], parts[5], dest)


# provider type and application per service family
_SERVICE_OWNERS = (
    (re.compile(r"^ack_vehicle_"), ("semaphore", "tlc")),
    (re.compile(r"^vehicle_(entering_in|leaving)_"), ("vehicle", "da")),
    (re.compile(r"^tlc_"), ("semaphore", "tlc")),
    (re.compile(r"^obstacle"), ("roadsidesig", "on")),
    (re.compile(r"^(presence|state)"), ("vehicle", "cacc")),
)


def service_owner(service: str) -> tuple:
    for pattern, owner in _SERVICE_OWNERS:
        if pattern.match(service):
            return owner
    return ("node", "app")


def make_name(service: str, road: int = 0, direction: int = 0, dest: Optional[int] = None, section: int = 0) -> CcnName:
    provider, app = service_owner(service)
    return CcnName(provider, int(road), int(direction), int(section), app, service, dest)


@dataclass
class CcnPacket:
    kind: int
    name: CcnName
    nonce: int
    hop_limit: int
    prev_hop: int
    payload: bytes = b""
    consumer: int = -1
    producer: int = -1
    targets: frozenset = frozenset()
    exclude: frozenset = frozenset()
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.text:
            self.text = str(self.name)

    def encoded_size(self) -> int:
        return (
            _FIXED.size
            + len(self.text.encode())
            + 4 + 1 + 4 + 4
            + 1 + 4 * len(self.targets)
            + 1 + 4 * len(self.exclude)
            + 2 + len(self.payload)
        )

    def encode(self) -> bytes:
        name = self.text.encode()
        out = bytearray(_FIXED.pack(self.kind, len(name)))
        out += name
        out += struct.pack(">IBiI", self.nonce, self.hop_limit, self.prev_hop, self.producer & 0xFFFFFFFF)
        out += struct.pack(">B", len(self.targets)) + b"".join(struct.pack(">i", t) for t in sorted(self.targets))
        out += struct.pack(">B", len(self.exclude)) + b"".join(struct.pack(">i", t) for t in sorted(self.exclude))
        out += struct.pack(">H", len(self.payload)) + bytes(self.payload)
        return bytes(out)


class _PitEntry:
    __slots__ = ("exclude", "links", "expiry")

    def __init__(self, exclude, links, expiry):
        self.exclude = exclude
        self.links = links
        self.expiry = expiry


class Pit:
    """Pending Interest Table keyed by data name, one entry per exclude set."""

    def __init__(self, lifetime_ns: int, capacity: int = PIT_CAPACITY):
        self.lifetime = lifetime_ns
        self.capacity = capacity
        self._entries = {}
        self.size = 0

    def _live(self, text, now):
        entries = self._entries.get(text)
        if not entries:
            return None
        alive = [e for e in entries if e.expiry > now]
        self.size -= len(entries) - len(alive)
        if alive:
            self._entries[text] = alive
            return alive
        del self._entries[text]
        return None

    def find(self, text, exclude, now):
        for e in self._live(text, now) or ():
            if e.exclude == exclude:
                return e
        return None

    def insert(self, text, exclude, link, now) -> Optional[bool]:
        """Record ``link`` as waiting for ``text``.

        Returns True when the Interest should be forwarded (new entry, or a
        retransmission from a link already in the entry, which refreshes
        its lifetime), False when it was aggregated into an entry created
        for another link, and None when the table is full.
        """
        entry = self.find(text, exclude, now)
        if entry is not None:
            if link in entry.links:
                entry.expiry = now + self.lifetime
                return True
            entry.links.add(link)
            return False
        if self.size >= self.capacity:
            self.purge(now)
            if self.size >= self.capacity:
                return None
        self._entries.setdefault(text, []).append(_PitEntry(exclude, {link}, now + self.lifetime))
        self.size += 1
        return True

    def consume(self, text, producer, now) -> set:
        """Remove every live entry this Data satisfies and return their links."""
        entries = self._live(text, now)
        if not entries:
            return set()
        links = set()
        keep = []
        for e in entries:
            if producer in e.exclude:
                keep.append(e)
            else:
                links |= e.links
        self.size -= len(entries) - len(keep)
        if keep:
            self._entries[text] = keep
        else:
            del self._entries[text]
        return links

    def purge(self, now):
        for text in list(self._entries):
            self._live(text, now)

    def __len__(self):
        return self.size


class CcnNode:
    """One CCN forwarder/endpoint.

    ``on_deliver(kind, packet, key)`` hands Interests (to producers) and
    Data (to consumers) to the application layer.
    """

    def __init__(
        self,
        host,
        medium,
        mode: str = "reactive",
        hop_limit: int = 5,
        pit_lifetime: float = PIT_LIFETIME,
        pit_capacity: int = PIT_CAPACITY,
        timer_k: Optional[float] = None,
        max_delay: float = MAX_TIMER,
        data_addressing: str = "pit",
        log=None,
        decisions=None,
    ):
        if mode not in ("reactive", "proactive"):
            raise ValueError(f"unknown CCN mode {mode!r}")
        if data_addressing not in ("breadcrumb", "pit"):
            raise ValueError(f"unknown data addressing {data_addressing!r}")
        self.host = host
        self.medium = medium
        self.kernel = medium.kernel
        self.mode = mode
        self.proactive = mode == "proactive"
        # "breadcrumb": reactive Data names its next hops; "pit": any node
        # holding a matching entry relays it (a single broadcast face)
        self.addressed = data_addressing == "breadcrumb"
        self.hop_limit = hop_limit
        self.pit = Pit(seconds(pit_lifetime), pit_capacity)
        prof = medium.profile
        self.timer_k = prof.slot * prof.range if timer_k is None else timer_k
        self.max_delay = max_delay
        self.log = log
        self.decisions = decisions
        self.services = set()
        self.seen_interests = set()
        self.seen_data = set()
        self.requests = {}  # (service, consumer) -> Interest packet awaiting an answer
        self.pending = {}  # packet identity -> timer Event
        self.on_deliver = None

    @property
    def nid(self) -> int:
        return self.host.nid

    # -- producer/consumer API ------------------------------------------------

    def register_service(self, service: str) -> None:
        self.services.add(service)

    def unregister_service(self, service: str) -> None:
        self.services.discard(service)

    def express(self, name: CcnName, nonce: int, payload: bytes = b"", exclude=frozenset(), key: int = -1) -> Optional[CcnPacket]:
        """Send an Interest from the local application."""
        pkt = CcnPacket(INTEREST, name, nonce, self.hop_limit, self.nid, bytes(payload), consumer=self.nid, exclude=frozenset(exclude))
        now = self.kernel.now
        self.seen_interests.add((pkt.text, nonce))
        created = self.pit.insert(pkt.text, pkt.exclude, APP, now)
        if created is None:
            self._drop(key, "pit_full")
            return None
        self._broadcast(pkt, key, 1, self.host.position())
        return pkt

    def reply(self, service: str, consumer: int, payload: bytes = b"", key: int = -1) -> Optional[CcnPacket]:
        """Answer the pending Interest of ``consumer`` for ``service``."""
        req = self.requests.pop((service, consumer), None)
        if req is None:
            self._drop(key, "no_request")
            return None
        targets = frozenset((req.prev_hop,)) if self.addressed and not self.proactive else frozenset()
        pkt = CcnPacket(
            DATA, req.name, req.nonce, self.hop_limit, self.nid, bytes(payload),
            consumer=consumer, producer=self.nid, targets=targets, exclude=req.exclude, text=req.text,
        )
        self.seen_data.add((pkt.text, pkt.nonce, self.nid))
        self._broadcast(pkt, key, 1, self.host.position())
        return pkt

    def is_producer(self, pkt: CcnPacket) -> bool:
        name = pkt.name
        if name.service not in self.services:
            return False
        if name.dest is not None and name.dest != self.nid:
            return False
        if self.nid in pkt.exclude:
            return False
        if name.road and name.road not in self.host.road_ids:
            return False
        return True

    # -- reception ------------------------------------------------------------

    def on_frame(self, frame: Frame) -> Action:
        pkt = frame.msg
        if pkt.kind == INTEREST:
            return self._on_interest(pkt, frame)
        return self._on_data(pkt, frame)

    def _on_interest(self, pkt: CcnPacket, frame: Frame) -> Action:
        key = frame.key
        ident = (pkt.text, pkt.nonce)
        if ident in self.seen_interests:
            self._overheard(ident, key)
            self._drop(key, "duplicate")
            self._record(key, Action.DISCARD, frame.hop)
            return Action.DISCARD
        self.seen_interests.add(ident)
        if self.is_producer(pkt):
            self.requests[(pkt.name.service, pkt.consumer)] = pkt
            self._record(key, Action.DELIVER, frame.hop)
            self._deliver(INTEREST, pkt, key)
            return Action.DELIVER
        remaining = pkt.hop_limit - 1
        if remaining <= 0:
            self._drop(key, "hop_limit")
            self._record(key, Action.DISCARD, frame.hop)
            return Action.DISCARD
        now = self.kernel.now
        created = self.pit.insert(pkt.text, pkt.exclude, pkt.prev_hop, now)
        if not created:
            self._drop(key, "pit_full" if created is None else "aggregated")
            self._record(key, Action.DISCARD, frame.hop)
            return Action.DISCARD
        out = CcnPacket(
            INTEREST, pkt.name, pkt.nonce, remaining, self.nid, pkt.payload,
            consumer=pkt.consumer, exclude=pkt.exclude, text=pkt.text,
        )
        self._record(key, Action.FORWARD, frame.hop)
        self._relay(ident, out, frame)
        return Action.FORWARD

    def _on_data(self, pkt: CcnPacket, frame: Frame) -> Action:
        key = frame.key
        if not self.proactive and self.addressed and self.nid not in pkt.targets:
            # overheard breadcrumb traffic for somebody else
            return Action.DISCARD
        ident = (pkt.text, pkt.nonce, pkt.producer)
        if ident in self.seen_data:
            self._overheard(ident, key)
            self._drop(key, "duplicate")
            self._record(key, Action.DISCARD, frame.hop)
            return Action.DISCARD
        self.seen_data.add(ident)
        links = self.pit.consume(pkt.text, pkt.producer, self.kernel.now)
        deliver = APP in links
        links.discard(APP)
        if self.proactive:
            forward = pkt.hop_limit - 1 > 0
            out_targets = frozenset()
        else:
            forward = bool(links)
            out_targets = frozenset(links) if self.addressed else frozenset()
        action = Action.of(deliver, forward)
        self._record(key, action, frame.hop)
        if deliver:
            self._deliver(DATA, pkt, key)
        if forward:
            out = CcnPacket(
                DATA, pkt.name, pkt.nonce, pkt.hop_limit - 1, self.nid, pkt.payload,
                consumer=pkt.consumer, producer=pkt.producer, targets=out_targets, exclude=pkt.exclude, text=pkt.text,
            )
            self._relay(ident, out, frame)
        elif not deliver:
            self._drop(key, "hop_limit" if self.proactive else "no_pit")
        return action

    # -- transmission ---------------------------------------------------------

    def rebroadcast_delay(self, d: float) -> float:
        """Proactive timer: ``K / d`` seconds, clamped; ``d = 0`` gives the clamp."""
        if d <= 0:
            return self.max_delay
        return min(self.timer_k / d, self.max_delay)

    def _relay(self, ident, out: CcnPacket, frame: Frame):
        if not self.proactive:
            self._send_relay(ident, out, frame.key, frame.hop + 1, frame.origin)
            return
        pos = self.medium.pos
        me = self.nid
        dx = pos[me, 0] - pos[frame.sender, 0]
        dy = pos[me, 1] - pos[frame.sender, 1]
        wait = self.rebroadcast_delay((dx * dx + dy * dy) ** 0.5)
        self.pending[ident] = self.kernel.schedule(
            self.kernel.now + seconds(wait), self._send_relay, ident, out, frame.key, frame.hop + 1, frame.origin, target=me
        )

    def _send_relay(self, ident, out, key, hop, origin):
        self.pending.pop(ident, None)
        if self.log is not None:
            self.log.forward(self.kernel.now, self.nid, key, hop - 1)
        self._broadcast(out, key, hop, origin)

    def _overheard(self, ident, key):
        ev = self.pending.pop(ident, None)
        if ev is not None:
            ev.cancel()
            self._drop(key, "suppressed")

    def _broadcast(self, pkt: CcnPacket, key: int, hop: int, origin):
        frame = Frame(pkt, 8 * pkt.encoded_size(), self.nid, key=key, hop=hop, origin=origin)
        self.medium.broadcast(self.nid, frame)

    def _deliver(self, kind, pkt, key):
        if self.log is not None:
            self.log.app_deliver(self.kernel.now, self.nid, key)
        if self.on_deliver is not None:
            self.on_deliver(kind, pkt, key)

    def _drop(self, key, reason):
        if self.log is not None:
            self.log.drop(self.kernel.now, self.nid, key, reason)

    def _record(self, key, action, hop):
        if self.decisions is not None:
            self.decisions.append((self.kernel.now, self.nid, key, action.value, hop))
