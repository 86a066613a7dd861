"""Privacy amplification: public permutation, then deletion of leaked bits."""

from __future__ import annotations

from dataclasses import dataclass

from .keys import KeyMaterial, Stage
from .rng import RandomSource

DEFAULT_MARGIN = 16


class KeyExhausted(RuntimeError):
    """Nothing would survive distillation."""

    reason = "key_exhausted"


@dataclass(frozen=True)
class AmplificationParams:
    security_margin: int = DEFAULT_MARGIN
    permutation_seed: int = 0

    def __post_init__(self) -> None:
        if self.security_margin < 0:
            raise ValueError("security_margin must be >= 0")


def derive_permutation(seed: int, length: int) -> list[int]:
    """Fisher-Yates shuffle of ``range(length)`` driven by ``RandomSource(seed)``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return RandomSource(seed).permutation(length)


def final_length(reconciled_len: int, discarded: int, disclosed_parities: int, margin: int) -> int:
    return reconciled_len - discarded - disclosed_parities - margin


def amplify(key: KeyMaterial, ledger, params: AmplificationParams) -> KeyMaterial:
    """Distill a Final key from a Reconciled one.

    Drops ``ledger.discarded_positions``, permutes the survivors with the
    seed-derived permutation (``out[i] = kept[perm[i]]``) and truncates the
    last ``disclosed_parities + security_margin`` bits.
    """
    if key.stage is not Stage.RECONCILED:
        raise ValueError(f"amplify needs a Reconciled key, got {key.stage.name}")
    discarded = set(ledger.discarded_positions)
    if any(not 0 <= i < len(key) for i in discarded):
        raise ValueError("discarded position out of range")
    kept = [b for i, b in enumerate(key.bits) if i not in discarded]
    length = final_length(len(key), len(discarded), ledger.disclosed_parities, params.security_margin)
    if length <= 0:
        raise KeyExhausted(f"final key length would be {length}")
    perm = derive_permutation(params.permutation_seed, len(kept))
    return key.advance([kept[j] for j in perm[:length]], Stage.FINAL, leaked_bits=0)
