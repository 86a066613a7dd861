"""Intercept-resend eavesdropper and her knowledge ledger."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import quantum
from .quantum import TWO_BASES, Basis, Polarization
from .rng import RandomSource
from .wire import ClassicalMessage, Tag


class EveStateError(RuntimeError):
    """Knowledge was requested before the public discussion revealed bases."""


@dataclass(frozen=True)
class Interception:
    index: int
    basis: Basis
    outcome: int


@dataclass(frozen=True)
class KnowledgeSummary:
    known_bits: int
    known_fraction: float
    sifted_len: int


class Eve:
    """Sits on the quantum channel and passively taps the classical one.

    Each photon is intercepted independently with probability
    ``intercept_prob``: Eve measures it in a uniformly chosen basis from
    ``bases`` and forwards the collapsed state.
    """

    def __init__(self, intercept_prob: float, rng: RandomSource, bases: Sequence[Basis] = TWO_BASES) -> None:
        if not 0.0 <= intercept_prob <= 1.0:
            raise ValueError("intercept_prob must lie in [0, 1]")
        self.intercept_prob = intercept_prob
        self.rng = rng
        self.bases = tuple(bases)
        self.quantum_log: list[Interception] = []
        self.classical_log: list[ClassicalMessage] = []
        self.knowledge: dict[int, int] = {}
        self._seen = 0

    def intercept(self, photon: Polarization) -> Polarization:
        index = self._seen
        self._seen += 1
        if not self.rng.random() < self.intercept_prob:
            return photon
        basis = self.bases[self.rng.below(len(self.bases))]
        outcome, collapsed = quantum.measure(photon, basis, self.rng)
        self.quantum_log.append(Interception(index, basis, outcome))
        return collapsed

    __call__ = intercept

    def observe(self, msg: ClassicalMessage) -> None:
        self.classical_log.append(msg)

    def announced(self) -> tuple[tuple[Basis, ...], tuple[int, ...]]:
        bases = kept = None
        for msg in self.classical_log:
            if msg.tag is Tag.BASES and bases is None:
                bases = msg["bases"]
            elif msg.tag is Tag.MATCH_INDICES and kept is None:
                kept = msg["indices"]
        if bases is None or kept is None:
            raise EveStateError("bases and match indices not yet announced")
        return bases, kept

    def summary(self) -> KnowledgeSummary:
        return eve_knowledge(self, *self.announced())


def eve_knowledge(eve: Eve, announced_bases: Optional[Sequence[Basis]], kept_indices: Optional[Sequence[int]]) -> KnowledgeSummary:
    """Count sifted positions whose value Eve learned exactly.

    A position is known iff Eve intercepted it in the basis the emitter
    announced. Fills ``eve.knowledge`` with sifted-index -> bit.
    """
    if announced_bases is None or kept_indices is None:
        raise EveStateError("bases not yet announced")
    by_index = {rec.index: rec for rec in eve.quantum_log}
    eve.knowledge = {}
    for pos, i in enumerate(kept_indices):
        rec = by_index.get(i)
        if rec is not None and rec.basis == announced_bases[i]:
            eve.knowledge[pos] = rec.outcome
    sifted_len = len(kept_indices)
    known = len(eve.knowledge)
    return KnowledgeSummary(known, known / sifted_len if sifted_len else 0.0, sifted_len)
