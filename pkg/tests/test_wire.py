import struct
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from qkdsim.quantum import Basis, Polarization
from qkdsim.wire import (MAX_FRAME, ClassicalMessage, MessageError, Tag, WireError, decode_photons,
                         decode_wire, encode_photons, encode_wire, message)

GOLDEN = Path(__file__).parent / "golden"
SID = "golden"

bits = st.lists(st.integers(0, 1), max_size=300)
indices = st.sets(st.integers(0, 2**32 - 1), max_size=60).map(sorted)
u64 = st.integers(0, 2**64 - 1)
text = st.text(max_size=40)


@st.composite
def messages(draw):
    tag = draw(st.sampled_from(list(Tag)))
    sid = draw(st.text(min_size=1, max_size=20))
    if tag is Tag.BASES:
        payload = {"bases": draw(st.lists(st.sampled_from(list(Basis)), max_size=200))}
    elif tag in (Tag.MATCH_INDICES, Tag.DISCARD_INDICES):
        payload = {"indices": draw(indices)}
    elif tag is Tag.CHECK_REQUEST:
        payload = {"indices": draw(indices), "bits": draw(bits)}
    elif tag is Tag.CHECK_BITS:
        payload = {"bits": draw(bits)}
    elif tag in (Tag.BLOCK_PARITY, Tag.PARITY_REPLY):
        start = draw(st.integers(0, 2**40))
        payload = {"pass": draw(st.integers(0, 50)), "start": start,
                   "stop": start + draw(st.integers(1, 2**20)), "parity": draw(st.integers(0, 1))}
    elif tag is Tag.PERMUTE:
        payload = {"purpose": draw(st.sampled_from(["reconcile", "amplify"])), "seed": draw(u64),
                   "discard": draw(st.integers(0, 10**6))}
    elif tag is Tag.ABORT:
        payload = {"reason": draw(text)}
    else:
        payload = {"length": draw(st.integers(0, 10**9))}
    return ClassicalMessage(tag, sid, payload)


@given(messages())
def test_round_trip(msg):
    assert decode_wire(encode_wire(msg)) == msg


def test_abort_round_trip():
    msg = message(Tag.ABORT, SID, reason="qber_exceeded")
    assert decode_wire(encode_wire(msg)) == msg
    assert encode_wire(msg) == (GOLDEN / "abort.bin").read_bytes()


def test_bases_golden_and_bound():
    bases = [Basis.RECTILINEAR, Basis.DIAGONAL, Basis.DIAGONAL, Basis.RECTILINEAR,
             Basis.RECTILINEAR, Basis.RECTILINEAR, Basis.DIAGONAL, Basis.DIAGONAL]
    frame = encode_wire(message(Tag.BASES, SID, bases=bases))
    assert frame == (GOLDEN / "bases8.bin").read_bytes()
    # documented size: 26 + len(session id) + number of bases
    assert len(frame) == 26 + len(SID) + 8 == 40
    assert struct.unpack(">I", frame[:4])[0] == len(frame) - 4


def test_bit_strings_are_packed():
    frame = encode_wire(message(Tag.CHECK_BITS, "s", bits=[1, 0, 1, 1, 0, 0, 0, 0, 1]))
    # ...| u32 bit length 9 | 0b10110000 0b10000000
    assert frame.endswith(bytes([0, 0, 0, 9, 0b10110000, 0b10000000]))


def test_empty_input_is_truncated():
    with pytest.raises(WireError, match="truncated frame") as info:
        decode_wire(b"")
    assert info.value.offset == 0


def test_truncated_body_reports_offset():
    frame = encode_wire(message(Tag.DONE, SID, length=5))
    with pytest.raises(WireError, match="truncated frame") as info:
        decode_wire(frame[:-3])
    assert info.value.offset == len(frame) - 3


def test_length_lie_inside_record():
    frame = bytearray(encode_wire(message(Tag.ABORT, SID, reason="x")))
    body_len = len(frame) - 4
    frame[-3:-1] = struct.pack(">H", 500)  # text length now runs past the end
    with pytest.raises(WireError, match="truncated") as info:
        decode_wire(bytes(frame))
    assert 4 <= info.value.offset <= body_len + 4


def test_unknown_tag():
    frame = encode_wire(message(Tag.DONE, SID, length=1)).replace(b"Done", b"Nope")
    with pytest.raises(WireError, match="unknown tag"):
        decode_wire(frame)


def test_length_overflow():
    with pytest.raises(WireError, match="length overflow"):
        decode_wire(struct.pack(">I", MAX_FRAME + 1) + b"\0" * 16)


def test_trailing_bytes_rejected():
    frame = encode_wire(message(Tag.DONE, SID, length=1))
    with pytest.raises(WireError, match="trailing"):
        decode_wire(frame + b"\0")


def test_payload_shape_checked():
    with pytest.raises(MessageError):
        message(Tag.MATCH_INDICES, SID, indices=[3, 2])
    with pytest.raises(MessageError):
        message(Tag.BLOCK_PARITY, SID, **{"pass": 0}, start=4, stop=4, parity=0)
    with pytest.raises(MessageError):
        message(Tag.CHECK_BITS, SID, bits=[0, 2])
    with pytest.raises(MessageError):
        message(Tag.DONE, SID)


def test_payload_mismatch_on_wire_is_decode_error():
    frame = bytearray(encode_wire(message(Tag.DONE, SID, length=1)))
    frame[frame.index(b"length"):frame.index(b"length") + 6] = b"lenxth"
    with pytest.raises(WireError, match="invalid payload"):
        decode_wire(bytes(frame))


@given(st.lists(st.sampled_from(list(Polarization)), max_size=500))
def test_photon_frames_round_trip(states):
    sid, decoded = decode_photons(encode_photons("q", states))
    assert sid == "q" and list(decoded) == states


def test_photon_frame_rejects_classical():
    with pytest.raises(WireError):
        decode_photons(encode_wire(message(Tag.DONE, SID, length=1)))
