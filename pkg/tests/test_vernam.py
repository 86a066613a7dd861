from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from qkdsim.vernam import (BitString, PadExhausted, PadState, brute_force_estimate, format_duration,
                           otp_decrypt, otp_encrypt)


def test_xor_table():
    assert str(otp_encrypt(BitString.from_text("1010"), PadState([0, 1, 1, 0]))) == "1100"


def test_zero_plaintext_reveals_pad():
    pad = [1, 0, 1, 1, 0, 0, 1, 0, 1]
    assert otp_encrypt(BitString.from_bits([0] * 9), PadState(pad)).bits() == pad


def test_decrypt_examples():
    assert str(otp_decrypt(BitString.from_text("1100"), PadState([0, 1, 1, 0]))) == "1010"
    assert str(otp_decrypt(BitString.from_text("0110"), PadState([0, 1, 1, 0]))) == "0000"


@given(st.binary(max_size=1024), st.randoms(use_true_random=False))
def test_involution(msg, rnd):
    pad = [rnd.getrandbits(1) for _ in range(8 * len(msg))]
    x = BitString.from_bytes(msg)
    y = otp_encrypt(x, PadState(pad))
    assert otp_decrypt(y, PadState(pad)) == x


def test_offset_advances_and_never_rewinds():
    pad = PadState([1, 0, 1, 0, 1, 1])
    otp_encrypt(BitString.from_text("11"), pad)
    assert pad.consumed_offset == 2
    otp_encrypt(BitString.from_text("1111"), pad)
    assert pad.consumed_offset == 6 and pad.remaining == 0
    with pytest.raises(PadExhausted):
        otp_encrypt(BitString.from_text("1"), pad)


def test_short_pad_refused():
    with pytest.raises(PadExhausted):
        otp_encrypt(BitString.from_text("111"), PadState([1, 0]))


def test_segments_are_consecutive():
    pad = PadState([1, 1, 0, 0])
    assert str(otp_encrypt(BitString.from_text("00"), pad)) == "11"
    assert str(otp_encrypt(BitString.from_text("00"), pad)) == "00"


def test_bitstring_validation():
    with pytest.raises(ValueError):
        BitString(b"\x00\x00", 3)


def test_smallest_estimate():
    est = brute_force_estimate(1, 1)
    assert est.keyspace == 2 and est.expected_us == 1
    assert format_duration(est) == "1 μs"


def test_arbitrary_precision():
    est = brute_force_estimate(2048, 1)
    assert est.keyspace == 2**2048
    assert est.expected_us == Decimal(2**2047)


def test_year_convention():
    est = brute_force_estimate(40, 1)
    assert abs(est.days - Decimal(2**39) / Decimal(86_400 * 10**6)) < Decimal("1e-25")
    assert abs(est.years * Decimal("365.25") - est.days) < Decimal("1e-20")


def test_invalid_inputs():
    with pytest.raises(ValueError):
        brute_force_estimate(0, 1)
    with pytest.raises(ValueError):
        brute_force_estimate(64, 0)
