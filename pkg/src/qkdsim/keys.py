"""Key material with its refinement stage and leakage count."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass


class Stage(enum.IntEnum):
    RAW = 0
    SIFTED = 1
    CHECKED = 2
    RECONCILED = 3
    FINAL = 4


class StageError(ValueError):
    pass


def pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 0x80 >> (i & 7)
    return bytes(out)


@dataclass(frozen=True)
class KeyMaterial:
    bits: tuple[int, ...]
    stage: Stage
    leaked_bits: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(self.bits))
        if not 0 <= self.leaked_bits <= len(self.bits):
            raise ValueError(f"leaked_bits {self.leaked_bits} outside [0, {len(self.bits)}]")

    def __len__(self) -> int:
        return len(self.bits)

    def advance(self, bits, stage: Stage, leaked_bits: int = 0) -> "KeyMaterial":
        if stage <= self.stage:
            raise StageError(f"cannot move from {self.stage.name} to {stage.name}")
        bits = tuple(bits)
        return KeyMaterial(bits, stage, min(leaked_bits, len(bits)))

    def digest(self) -> str:
        """SHA-256 over the 4-byte big-endian bit length and the packed bits."""
        h = hashlib.sha256(len(self.bits).to_bytes(4, "big"))
        h.update(pack_bits(self.bits))
        return h.hexdigest()

    def as_bytes(self) -> bytes:
        return pack_bits(self.bits)
