"""One-time pad over exact bit lengths, and brute-force key search cost."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, localcontext
from typing import Sequence

MICROSECONDS_PER_DAY = 86_400 * 10**6
DAYS_PER_YEAR = Decimal("365.25")


class PadExhausted(RuntimeError):
    """Not enough unused pad bits; a pad segment is never reused."""


@dataclass(frozen=True)
class BitString:
    """Bytes with an explicit bit length (MSB first; trailing pad bits are zero)."""

    data: bytes
    bit_length: int

    def __post_init__(self) -> None:
        if not 0 <= self.bit_length <= 8 * len(self.data) or len(self.data) != (self.bit_length + 7) // 8:
            raise ValueError("data size does not match bit_length")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitString":
        out = bytearray((len(bits) + 7) // 8)
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("not a bit")
            if b:
                out[i >> 3] |= 0x80 >> (i & 7)
        return cls(bytes(out), len(bits))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        return cls(bytes(data), 8 * len(data))

    @classmethod
    def from_text(cls, text: str) -> "BitString":
        """Parse a string of '0'/'1' characters."""
        return cls.from_bits([int(c) for c in text])

    def bits(self) -> list[int]:
        return [(self.data[i >> 3] >> (7 - (i & 7))) & 1 for i in range(self.bit_length)]

    def __len__(self) -> int:
        return self.bit_length

    def __str__(self) -> str:
        return "".join(map(str, self.bits()))


Plaintext = Ciphertext = BitString


class PadState:
    """A key consumed strictly forward; each bit is used at most once."""

    def __init__(self, key_bits: Sequence[int]) -> None:
        self._key = BitString.from_bits(list(key_bits)) if not isinstance(key_bits, BitString) else key_bits
        self._int = int.from_bytes(self._key.data, "big") if self._key.data else 0
        self._total_bits = 8 * len(self._key.data)
        self.consumed_offset = 0

    @property
    def remaining(self) -> int:
        return len(self._key) - self.consumed_offset

    def take(self, nbits: int) -> int:
        """Consume the next ``nbits`` pad bits and return them as an integer."""
        if nbits > self.remaining:
            raise PadExhausted(f"need {nbits} pad bits, {self.remaining} left")
        start = self.consumed_offset
        self.consumed_offset += nbits
        shift = self._total_bits - start - nbits
        return (self._int >> shift) & ((1 << nbits) - 1)


def _xor(x: BitString, pad: PadState) -> BitString:
    n = len(x)
    segment = pad.take(n)
    if n == 0:
        return BitString(b"", 0)
    nbytes = (n + 7) // 8
    value = int.from_bytes(x.data, "big") >> (8 * nbytes - n)
    return BitString(((value ^ segment) << (8 * nbytes - n)).to_bytes(nbytes, "big"), n)


def otp_encrypt(x: Plaintext, pad: PadState) -> Ciphertext:
    """Y = X xor K, consuming the next ``len(x)`` pad bits."""
    return _xor(x, pad)


def otp_decrypt(y: Ciphertext, pad: PadState) -> Plaintext:
    """X = Y xor K, with the receiver's own copy of the pad."""
    return _xor(y, pad)


@dataclass(frozen=True)
class BruteForceEstimate:
    key_bits: int
    rate: Decimal  # decryptions per microsecond
    keyspace: int
    expected_us: Decimal  # mean search time: half the keyspace

    @property
    def seconds(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = _precision(self.key_bits)
            return self.expected_us / 10**6

    @property
    def days(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = _precision(self.key_bits)
            return self.expected_us / MICROSECONDS_PER_DAY

    @property
    def years(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = _precision(self.key_bits)
            return self.days / DAYS_PER_YEAR


def _precision(key_bits: int) -> int:
    # enough digits to hold 2**key_bits exactly, plus 40 for fractions
    return key_bits * 302 // 1000 + 42


def brute_force_estimate(key_bits: int, decryptions_per_microsecond) -> BruteForceEstimate:
    if key_bits < 1:
        raise ValueError("key_bits must be >= 1")
    rate = Decimal(str(decryptions_per_microsecond))
    if rate <= 0:
        raise ValueError("rate must be positive")
    with localcontext() as ctx:
        ctx.prec = _precision(key_bits)
        expected = Decimal(2 ** (key_bits - 1)) / rate
    return BruteForceEstimate(key_bits, rate, 2**key_bits, expected)


def format_sci(value, digits: int = 2) -> str:
    """``1.8e19`` style with ``digits`` significant figures; values below 1000 print plainly."""
    d = Decimal(value)
    if d < 1000:
        return f"{float(d):.4g}"
    mantissa, exp = f"{d:.{digits - 1}e}".split("e")
    return f"{mantissa}e{int(exp)}"


def format_duration(est: BruteForceEstimate) -> str:
    """Largest of years / days / seconds / microseconds whose value is >= 1."""
    for value, unit in ((est.years, "years"), (est.days, "days"), (est.seconds, "s")):
        if value >= 1:
            return f"{format_sci(value)} {unit}"
    return f"{format_sci(est.expected_us)} μs"
