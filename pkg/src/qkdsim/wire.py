"""Classical messages of the public discussion and their wire encoding.

Frame layout (all integers big-endian)::

    frame   := u32 length | record            (length counts record bytes)
    record  := text tag | text session_id | u8 nfields | field*
    field   := text name | u8 kind | value
    text    := u16 nbytes | utf-8 bytes

    kind 1  uint     u64
    kind 2  bits     u32 bit_length | ceil(bit_length / 8) bytes, MSB first,
                     zero padded
    kind 3  indices  u32 count | count * u32
    kind 4  text     text
    kind 5  bases    u32 count | count ascii bytes from "RDC"
    kind 6  states   u32 count | count bytes (polarization codes 0..5)

Fields appear in the order of the tag's schema. A ``Bases`` message with
``b`` bases and a session id of ``s`` UTF-8 bytes encodes to exactly
``4 + 7 + (2 + s) + 1 + 7 + 1 + 4 + b`` = ``26 + s + b`` bytes; with 8 bases
that is ``34 + s``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Any

from .keys import pack_bits
from .quantum import Basis, Polarization

MAX_FRAME = 64 * 1024 * 1024
PHOTONS_TAG = "Photons"


class WireError(ValueError):
    """Malformed or truncated frame; ``offset`` locates the fault."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.reason = message
        self.offset = offset


class MessageError(ValueError):
    """Payload does not match the shape required by its tag."""


class Tag(str, enum.Enum):
    BASES = "Bases"
    MATCH_INDICES = "MatchIndices"
    CHECK_REQUEST = "CheckRequest"
    CHECK_BITS = "CheckBits"
    BLOCK_PARITY = "BlockParity"
    PARITY_REPLY = "ParityReply"
    PERMUTE = "Permute"
    DISCARD_INDICES = "DiscardIndices"
    ABORT = "Abort"
    DONE = "Done"


_UINT, _BITS, _INDICES, _TEXT, _BASES, _STATES = 1, 2, 3, 4, 5, 6

_PARITY_FIELDS = (("pass", _UINT), ("start", _UINT), ("stop", _UINT), ("parity", _UINT))

SCHEMA: dict[Tag, tuple[tuple[str, int], ...]] = {
    Tag.BASES: (("bases", _BASES),),
    Tag.MATCH_INDICES: (("indices", _INDICES),),
    Tag.CHECK_REQUEST: (("indices", _INDICES), ("bits", _BITS)),
    Tag.CHECK_BITS: (("bits", _BITS),),
    Tag.BLOCK_PARITY: _PARITY_FIELDS,
    Tag.PARITY_REPLY: _PARITY_FIELDS,
    Tag.PERMUTE: (("purpose", _TEXT), ("seed", _UINT), ("discard", _UINT)),
    Tag.DISCARD_INDICES: (("indices", _INDICES),),
    Tag.ABORT: (("reason", _TEXT),),
    Tag.DONE: (("length", _UINT),),
}


def _check_value(kind: int, name: str, value: Any) -> Any:
    if kind == _UINT:
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 1 << 64:
            raise MessageError(f"{name}: expected u64, got {value!r}")
        return value
    if kind == _TEXT:
        if not isinstance(value, str):
            raise MessageError(f"{name}: expected text, got {value!r}")
        return value
    items = tuple(value)
    if kind == _BITS:
        if any(b not in (0, 1) for b in items):
            raise MessageError(f"{name}: bit string contains non-bits")
        return tuple(int(b) for b in items)
    if kind == _INDICES:
        if any(isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < 1 << 32 for i in items):
            raise MessageError(f"{name}: indices must be u32")
        if any(a >= b for a, b in zip(items, items[1:])):
            raise MessageError(f"{name}: indices must be strictly increasing")
        return items
    if kind == _BASES:
        return tuple(Basis(b) for b in items)
    if kind == _STATES:
        return tuple(Polarization(s) for s in items)
    raise MessageError(f"{name}: unknown kind {kind}")


@dataclass(frozen=True)
class ClassicalMessage:
    tag: Tag
    session_id: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        tag = Tag(self.tag)
        object.__setattr__(self, "tag", tag)
        schema = SCHEMA[tag]
        names = [name for name, _ in schema]
        if sorted(self.payload) != sorted(names):
            raise MessageError(f"{tag.value} payload needs fields {names}, got {sorted(self.payload)}")
        clean = {name: _check_value(kind, name, self.payload[name]) for name, kind in schema}
        if tag in (Tag.BLOCK_PARITY, Tag.PARITY_REPLY):
            if clean["parity"] not in (0, 1):
                raise MessageError("parity must be a bit")
            if not clean["start"] < clean["stop"]:
                raise MessageError("block range must be non-empty and half-open")
        object.__setattr__(self, "payload", clean)

    def __getitem__(self, name: str) -> Any:
        return self.payload[name]

    def to_json(self) -> dict:
        out = {}
        for name, kind in SCHEMA[self.tag]:
            value = self.payload[name]
            if kind == _BASES:
                value = "".join(b.symbol for b in value)
            elif kind == _BITS:
                value = "".join(map(str, value))
            elif kind == _INDICES:
                value = list(value)
            out[name] = value
        return {"tag": self.tag.value, "session": self.session_id, "payload": out}


def message(tag: Tag, session_id: str, **payload: Any) -> ClassicalMessage:
    return ClassicalMessage(tag, session_id, payload)


# --- encoding -------------------------------------------------------------

def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise MessageError("text field too long")
    return struct.pack(">H", len(raw)) + raw


def _pack_bits(bits) -> bytes:
    return struct.pack(">I", len(bits)) + pack_bits(bits)


def _value(kind: int, value: Any) -> bytes:
    if kind == _UINT:
        return struct.pack(">Q", value)
    if kind == _TEXT:
        return _text(value)
    if kind == _BITS:
        return _pack_bits(value)
    if kind == _INDICES:
        return struct.pack(f">I{len(value)}I", len(value), *value)
    if kind == _BASES:
        return struct.pack(">I", len(value)) + "".join(b.symbol for b in value).encode("ascii")
    if kind == _STATES:
        return struct.pack(">I", len(value)) + bytes(int(s) for s in value)
    raise MessageError(f"unknown kind {kind}")


def _record(tag: str, session_id: str, fields: list[tuple[str, int, Any]]) -> bytes:
    parts = [_text(tag), _text(session_id), struct.pack(">B", len(fields))]
    for name, kind, value in fields:
        parts += [_text(name), struct.pack(">B", kind), _value(kind, value)]
    body = b"".join(parts)
    if len(body) > MAX_FRAME:
        raise MessageError("frame exceeds maximum length")
    return struct.pack(">I", len(body)) + body


def encode_wire(msg: ClassicalMessage) -> bytes:
    fields = [(name, kind, msg.payload[name]) for name, kind in SCHEMA[msg.tag]]
    return _record(msg.tag.value, msg.session_id, fields)


def encode_photons(session_id: str, states) -> bytes:
    """Quantum-stream frame carrying a pulse train of polarization states."""
    return _record(PHOTONS_TAG, session_id, [("states", _STATES, tuple(states))])


# --- decoding -------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes, base: int) -> None:
        self.data = data
        self.pos = 0
        self.base = base  # offset of data[0] within the frame

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated frame", self.base + self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack(">H")
        at = self.base + self.pos
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise WireError("invalid utf-8 text", at) from None

    def value(self, kind: int) -> Any:
        at = self.base + self.pos
        if kind == _UINT:
            return self.unpack(">Q")[0]
        if kind == _TEXT:
            return self.text()
        (count,) = self.unpack(">I")
        if kind == _BITS:
            raw = self.take((count + 7) // 8)
            return tuple((raw[i >> 3] >> (7 - (i & 7))) & 1 for i in range(count))
        if kind == _INDICES:
            return self.unpack(f">{count}I")
        if kind == _BASES:
            raw = self.take(count)
            try:
                return tuple(Basis.from_symbol(chr(c)) for c in raw)
            except ValueError:
                raise WireError("invalid basis symbol", at) from None
        if kind == _STATES:
            raw = self.take(count)
            if any(c > 5 for c in raw):
                raise WireError("invalid polarization code", at)
            return tuple(Polarization(c) for c in raw)
        raise WireError(f"unknown field kind {kind}", at - 1)


def frame_length(header: bytes) -> int:
    """Validate a 4-byte length prefix and return the record length."""
    if len(header) < 4:
        raise WireError("truncated frame", 0)
    (length,) = struct.unpack(">I", header[:4])
    if length > MAX_FRAME:
        raise WireError(f"length overflow: {length} > {MAX_FRAME}", 0)
    return length


def decode_record(body: bytes) -> tuple[str, str, dict[str, Any], dict[str, int]]:
    """Parse a record (without its length prefix) into tag, session, fields."""
    r = _Reader(body, 4)
    tag, session_id = r.text(), r.text()
    (nfields,) = r.unpack(">B")
    fields: dict[str, Any] = {}
    offsets: dict[str, int] = {}
    for _ in range(nfields):
        offsets_at = r.base + r.pos
        name = r.text()
        (kind,) = r.unpack(">B")
        fields[name] = r.value(kind)
        offsets[name] = offsets_at
    if r.pos != len(body):
        raise WireError("trailing bytes in record", r.base + r.pos)
    return tag, session_id, fields, offsets


def _split_frame(data: bytes) -> bytes:
    length = frame_length(data)
    if len(data) < 4 + length:
        raise WireError("truncated frame", len(data))
    if len(data) > 4 + length:
        raise WireError("trailing bytes after frame", 4 + length)
    return data[4:]


def decode_wire(data: bytes) -> ClassicalMessage:
    tag, session_id, fields, _ = decode_record(_split_frame(bytes(data)))
    try:
        tag_enum = Tag(tag)
    except ValueError:
        raise WireError(f"unknown tag {tag!r}", 4) from None
    try:
        return ClassicalMessage(tag_enum, session_id, fields)
    except (MessageError, ValueError) as exc:
        raise WireError(f"invalid payload: {exc}", 4) from None


def decode_photons(data: bytes) -> tuple[str, tuple[Polarization, ...]]:
    tag, session_id, fields, _ = decode_record(_split_frame(bytes(data)))
    if tag != PHOTONS_TAG or set(fields) != {"states"}:
        raise WireError(f"expected a {PHOTONS_TAG} frame, got {tag!r}", 4)
    return session_id, fields["states"]
