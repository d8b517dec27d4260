"""Shared domain types: node prefixes, interests, message headers and the wire codec.

Header layout (big-endian, most significant bit first)::

    version      u8
    hop_count    u8     (hop_limit for RAdNet messages)
    header_len   u8     in 32-bit words
    message_id   u32
    dest_prefix  u32    all-zero means "no destination"
    src_prefix   u32
    interest     u32    code from an InterestCodebook
    position     3 x i32  millimetres (x, y, z)
    direction    i8     -1, 0 or 1
    road_id      u32

The RAdNet-VE header is 36 bytes. The plain RAdNet header drops the
position, direction and road fields and carries one pad byte so that its
length stays a whole number of words (20 bytes).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

PROTOCOL_VERSION = 1
MAX_HOP_FIELD = 255

_VE_HEADER = struct.Struct(">BBBIIIIiiibI")
_R_HEADER = struct.Struct(">BBBIIIIx")

VE_HEADER_BYTES = _VE_HEADER.size
R_HEADER_BYTES = _R_HEADER.size

_I32_MIN, _I32_MAX = -(2**31), 2**31 - 1
_U32_MAX = 2**32 - 1


class MalformedHeaderError(ValueError):
    """Raised when a byte buffer cannot be decoded into a message header."""


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Prefixes


@dataclass(frozen=True)
class NodePrefix:
    """Probabilistic node identity: ``n`` fields, each drawn from ``range(m)``."""

    fields: tuple
    m: int = 8

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError("m must be positive")
        if not self.fields:
            raise ConfigurationError("a prefix needs at least one field")
        for v in self.fields:
            if not 0 <= v < self.m:
                raise ConfigurationError(f"field value {v} outside [0, {self.m - 1}]")

    @property
    def n(self) -> int:
        return len(self.fields)

    @property
    def identity(self) -> str:
        return "".join(str(v) for v in self.fields)

    def __str__(self) -> str:
        return self.identity

    def to_code(self) -> int:
        return encode_prefix(self)


def bits_per_field(m: int) -> int:
    return max(1, math.ceil(math.log2(m))) if m > 1 else 1


def generate_prefix(n: int, m: int, rng) -> NodePrefix:
    """Draw ``n`` independent uniform field values in ``[0, m-1]``.

    ``rng`` is a ``random.Random``-like object. The all-zero identity is
    reserved as the wire encoding of "no destination", so it is redrawn
    whenever another value exists (m > 1).
    """
    if n < 1 or m < 1:
        raise ConfigurationError("n and m must be positive")
    while True:
        fields = tuple(rng.randrange(m) for _ in range(n))
        if m == 1 or any(fields):
            return NodePrefix(fields, m)


def prefix_match(a: NodePrefix, b: NodePrefix) -> int:
    """Number of positions at which the two prefixes carry the same value."""
    if len(a.fields) != len(b.fields):
        raise ConfigurationError("prefixes of different length cannot be matched")
    return sum(1 for x, y in zip(a.fields, b.fields) if x == y)


def encode_prefix(prefix: Optional[NodePrefix]) -> int:
    """Pack a prefix into the top bits of a 32-bit word; ``None`` maps to 0."""
    if prefix is None:
        return 0
    width = bits_per_field(prefix.m)
    total = width * prefix.n
    if total > 32:
        raise ConfigurationError(f"{prefix.n}x{prefix.m} prefix needs {total} bits (> 32)")
    value = 0
    for v in prefix.fields:
        value = (value << width) | v
    return value << (32 - total)


def decode_prefix(word: int, n: int = 8, m: int = 8) -> Optional[NodePrefix]:
    if word == 0:
        return None
    width = bits_per_field(m)
    total = width * n
    if word & ((1 << (32 - total)) - 1):
        raise MalformedHeaderError("non-zero padding bits in prefix field")
    word >>= 32 - total
    mask = (1 << width) - 1
    fields = [(word >> (width * (n - 1 - k))) & mask for k in range(n)]
    if any(v >= m for v in fields):
        raise MalformedHeaderError("prefix field value out of range")
    return NodePrefix(tuple(fields), m)


# ---------------------------------------------------------------------------
# Positions and headers


@dataclass(frozen=True)
class GeoPosition:
    """Three signed 32-bit fixed-point coordinates in millimetres.

    The simulator works in local planar metres; ``longitude`` carries x,
    ``latitude`` y and ``altitude`` z.
    """

    longitude: int
    latitude: int
    altitude: int = 0

    @classmethod
    def from_meters(cls, x: float, y: float, z: float = 0.0) -> "GeoPosition":
        return cls(int(round(x * 1000.0)), int(round(y * 1000.0)), int(round(z * 1000.0)))

    @property
    def x(self) -> float:
        return self.longitude / 1000.0

    @property
    def y(self) -> float:
        return self.latitude / 1000.0

    @property
    def z(self) -> float:
        return self.altitude / 1000.0

    def meters(self) -> tuple:
        return (self.x, self.y)


DIRECTIONS = (-1, 0, 1)


@dataclass(frozen=True)
class InterestRegistration:
    interest: str
    max_hops: int

    def __post_init__(self):
        if not self.interest:
            raise ConfigurationError("interest must be a non-empty string")
        if not 0 <= self.max_hops <= MAX_HOP_FIELD:
            raise ConfigurationError("max_hops must be in [0, 255]")


@dataclass(frozen=True)
class VeMessage:
    """RAdNet-VE message: extended header plus opaque payload."""

    message_id: int
    src_prefix: NodePrefix
    interest: int
    position: GeoPosition
    direction: int = 0
    road_id: int = 0
    dest_prefix: Optional[NodePrefix] = None
    hop_count: int = 0
    payload: bytes = b""
    version: int = PROTOCOL_VERSION
    header_length: int = VE_HEADER_BYTES // 4

    @property
    def key(self) -> tuple:
        return (self.src_prefix, self.message_id)


@dataclass(frozen=True)
class RMessage:
    """Original RAdNet message; the hop field counts down."""

    message_id: int
    src_prefix: NodePrefix
    interest: int
    hop_limit: int
    dest_prefix: Optional[NodePrefix] = None
    payload: bytes = b""
    version: int = PROTOCOL_VERSION
    header_length: int = R_HEADER_BYTES // 4

    @property
    def key(self) -> tuple:
        return (self.src_prefix, self.message_id)


def _check_u(value, bits, name):
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value} does not fit in {bits} unsigned bits")


def encode_header(msg: VeMessage) -> bytes:
    """Serialize a VeMessage (header followed by payload)."""
    _check_u(msg.version, 8, "version")
    _check_u(msg.hop_count, 8, "hop_count")
    _check_u(msg.header_length, 8, "header_length")
    _check_u(msg.message_id, 32, "message_id")
    _check_u(msg.interest, 32, "interest")
    _check_u(msg.road_id, 32, "road_id")
    if msg.direction not in DIRECTIONS:
        raise ValueError(f"direction {msg.direction} not in {{-1, 0, 1}}")
    pos = msg.position
    for v in (pos.longitude, pos.latitude, pos.altitude):
        if not _I32_MIN <= v <= _I32_MAX:
            raise ValueError("position coordinate outside signed 32-bit range")
    if msg.src_prefix is None:
        raise ValueError("source prefix is mandatory")
    head = _VE_HEADER.pack(
        msg.version,
        msg.hop_count,
        msg.header_length,
        msg.message_id,
        encode_prefix(msg.dest_prefix),
        encode_prefix(msg.src_prefix),
        msg.interest,
        pos.longitude,
        pos.latitude,
        pos.altitude,
        msg.direction,
        msg.road_id,
    )
    return head + bytes(msg.payload)


def decode_header(buf: bytes, n: int = 8, m: int = 8) -> VeMessage:
    """Inverse of :func:`encode_header` for prefixes of ``n`` fields over ``m`` values."""
    if len(buf) < VE_HEADER_BYTES:
        raise MalformedHeaderError(f"buffer of {len(buf)} bytes is shorter than the header")
    (version, hop, hlen, mid, dest, src, interest, lon, lat, alt, direction, road) = _VE_HEADER.unpack_from(buf)
    if hlen * 4 != VE_HEADER_BYTES:
        raise MalformedHeaderError(f"header_length {hlen} words does not match the layout")
    if direction not in DIRECTIONS:
        raise MalformedHeaderError(f"direction byte {direction} not in {{-1, 0, 1}}")
    src_prefix = decode_prefix(src, n, m)
    if src_prefix is None:
        raise MalformedHeaderError("source prefix is null")
    return VeMessage(
        message_id=mid,
        src_prefix=src_prefix,
        interest=interest,
        position=GeoPosition(lon, lat, alt),
        direction=direction,
        road_id=road,
        dest_prefix=decode_prefix(dest, n, m),
        hop_count=hop,
        payload=bytes(buf[VE_HEADER_BYTES:]),
        version=version,
        header_length=hlen,
    )


def encode_rheader(msg: RMessage) -> bytes:
    _check_u(msg.version, 8, "version")
    _check_u(msg.hop_limit, 8, "hop_limit")
    _check_u(msg.message_id, 32, "message_id")
    _check_u(msg.interest, 32, "interest")
    head = _R_HEADER.pack(
        msg.version,
        msg.hop_limit,
        msg.header_length,
        msg.message_id,
        encode_prefix(msg.dest_prefix),
        encode_prefix(msg.src_prefix),
        msg.interest,
    )
    return head + bytes(msg.payload)


def decode_rheader(buf: bytes, n: int = 8, m: int = 8) -> RMessage:
    if len(buf) < R_HEADER_BYTES:
        raise MalformedHeaderError(f"buffer of {len(buf)} bytes is shorter than the header")
    version, hop_limit, hlen, mid, dest, src, interest = _R_HEADER.unpack_from(buf)
    if hlen * 4 != R_HEADER_BYTES:
        raise MalformedHeaderError(f"header_length {hlen} words does not match the layout")
    src_prefix = decode_prefix(src, n, m)
    if src_prefix is None:
        raise MalformedHeaderError("source prefix is null")
    return RMessage(
        message_id=mid,
        src_prefix=src_prefix,
        interest=interest,
        hop_limit=hop_limit,
        dest_prefix=decode_prefix(dest, n, m),
        payload=bytes(buf[R_HEADER_BYTES:]),
        version=version,
        header_length=hlen,
    )


# ---------------------------------------------------------------------------
# Interest codebook


@dataclass
class InterestCodebook:
    """Bidirectional map between interest strings and 32-bit wire codes.

    Codes are handed out sequentially from 1 in insertion order, so a
    codebook built from the same configuration is always identical.
    """

    _codes: dict = field(default_factory=dict)
    _names: dict = field(default_factory=dict)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "InterestCodebook":
        book = cls()
        for name in names:
            book.add(name)
        return book

    def add(self, name: str) -> int:
        if not name:
            raise ConfigurationError("interest names must be non-empty")
        code = self._codes.get(name)
        if code is None:
            code = len(self._codes) + 1
            if code > _U32_MAX:
                raise ConfigurationError("interest codebook exhausted")
            self._codes[name] = code
            self._names[code] = name
        return code

    def code(self, name: str) -> int:
        try:
            return self._codes[name]
        except KeyError:
            return self.add(name)

    def name(self, code: int) -> str:
        return self._names[code]

    def __contains__(self, name) -> bool:
        return name in self._codes

    def __len__(self) -> int:
        return len(self._codes)

    def to_dict(self) -> dict:
        return dict(self._codes)
