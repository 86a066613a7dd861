"""Interactive parity reconciliation with binary search for differing bits.

Both sides walk the same deterministic schedule. For every pass the key is
read through an ordering (identity first, then a publicly seeded shuffle),
cut into consecutive blocks, and the emitter discloses each block's parity in
a ``BlockParity`` message; the receiver answers with its own parity in a
``ParityReply``. A mismatching block is bisected, disclosing the parity of the
left half at each level, until a single differing position remains. The
emitter's key is the reference: the receiver flips that bit and both sides
mark the position discarded for privacy amplification.
"""

from __future__ import annotations

import asyncio
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .amplification import derive_permutation
from .channel import ClassicalChannel, ProtocolViolation, expect
from .rng import RandomSource
from .wire import Tag, message

AUTO_NUMERATOR = 0.73
QBER_FLOOR = 0.01
SHRINK = 0.75


@dataclass(frozen=True)
class ReconciliationParams:
    initial_block_len: Optional[int] = None  # None: sized from the QBER estimate
    passes: int = 4
    permute_between_passes: bool = True

    def __post_init__(self) -> None:
        if self.initial_block_len is not None and self.initial_block_len < 2:
            raise ValueError("initial_block_len must be >= 2")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass
class LeakageLedger:
    disclosed_parities: int = 0
    discarded_positions: set[int] = field(default_factory=set)


def parity(bits: Sequence[int], start: int = 0, stop: Optional[int] = None) -> int:
    """XOR of ``bits[start:stop]``."""
    if stop is None:
        stop = len(bits)
    if not 0 <= start <= stop <= len(bits):
        raise IndexError(f"range [{start}, {stop}) outside key of length {len(bits)}")
    return sum(bits[start:stop]) & 1


def block_lengths(key_len: int, params: ReconciliationParams, qber: float) -> list[int]:
    """Block length for each pass; shrinks by a quarter every pass, never below 2."""
    if params.initial_block_len is not None:
        k = min(params.initial_block_len, key_len)
    else:
        k = math.ceil(AUTO_NUMERATOR / max(qber, QBER_FLOOR))
        k = min(max(k, 4), max(key_len // 2, 2))
    k = max(min(k, key_len), 1)
    out = []
    for _ in range(params.passes):
        out.append(k)
        k = max(2, math.ceil(k * SHRINK)) if k > 2 else k
    return out


class _Side:
    """Shared pass/bisect schedule; subclasses supply one parity exchange."""

    def __init__(self, key: list[int], link, session_id: str) -> None:
        self.key = key
        self.link = link
        self.sid = session_id
        self.ledger = LeakageLedger()
        self.order: list[int] = []

    def _parity(self, lo: int, hi: int) -> int:
        key, order = self.key, self.order
        return sum(key[order[i]] for i in range(lo, hi)) & 1

    async def probe(self, pass_index: int, lo: int, hi: int) -> bool:
        raise NotImplementedError

    async def next_order(self, pass_index: int, n: int) -> list[int]:
        raise NotImplementedError

    def fix(self, index: int) -> None:
        self.ledger.discarded_positions.add(index)

    async def bisect(self, pass_index: int, lo: int, hi: int) -> int:
        """Narrow a mismatching ordered range down to one position."""
        while hi - lo > 1:
            mid = lo + (hi - lo) // 2
            if await self.probe(pass_index, lo, mid):
                hi = mid
            else:
                lo = mid
        return self.order[lo]

    async def run(self, lengths: list[int], on_pass: Optional[Callable] = None) -> LeakageLedger:
        n = len(self.key)
        for p, k in enumerate(lengths):
            self.order = await self.next_order(p, n)
            for lo in range(0, n, k):
                hi = min(lo + k, n)
                if await self.probe(p, lo, hi):
                    self.fix(await self.bisect(p, lo, hi))
            if on_pass is not None:
                on_pass(p, list(self.key))
        return self.ledger


class EmitterSide(_Side):
    def __init__(self, key, link, session_id, rng: RandomSource, permute: bool = True) -> None:
        super().__init__(list(key), link, session_id)
        self.rng = rng
        self.permute = permute

    async def next_order(self, pass_index, n):
        if pass_index == 0 or not self.permute:
            return list(range(n))
        seed = self.rng.next_u64()
        self.link.send(message(Tag.PERMUTE, self.sid, purpose="reconcile", seed=seed, discard=0))
        return derive_permutation(seed, n)

    async def probe(self, pass_index, lo, hi):
        mine = self._parity(lo, hi)
        self.link.send(message(Tag.BLOCK_PARITY, self.sid, **{"pass": pass_index}, start=lo, stop=hi, parity=mine))
        self.ledger.disclosed_parities += 1
        reply = await expect(self.link, Tag.PARITY_REPLY)
        if (reply["pass"], reply["start"], reply["stop"]) != (pass_index, lo, hi):
            raise ProtocolViolation("parity reply for the wrong block")
        return reply["parity"] != mine


class ReceiverSide(_Side):
    def __init__(self, key, link, session_id, permute: bool = True) -> None:
        super().__init__(key, link, session_id)
        self.permute = permute

    async def next_order(self, pass_index, n):
        if pass_index == 0 or not self.permute:
            return list(range(n))
        msg = await expect(self.link, Tag.PERMUTE)
        if msg["purpose"] != "reconcile":
            raise ProtocolViolation(f"unexpected permute purpose {msg['purpose']!r}")
        return derive_permutation(msg["seed"], n)

    async def probe(self, pass_index, lo, hi):
        msg = await expect(self.link, Tag.BLOCK_PARITY)
        if (msg["pass"], msg["start"], msg["stop"]) != (pass_index, lo, hi):
            raise ProtocolViolation(
                f"block parity for pass {msg['pass']} [{msg['start']}, {msg['stop']}), "
                f"expected pass {pass_index} [{lo}, {hi})"
            )
        mine = self._parity(lo, hi)
        self.link.send(message(Tag.PARITY_REPLY, self.sid, **{"pass": pass_index}, start=lo, stop=hi, parity=mine))
        self.ledger.disclosed_parities += 1
        return mine != msg["parity"]

    def fix(self, index):
        self.key[index] ^= 1
        super().fix(index)


async def reconcile_emitter(key, params, qber, link, rng, session_id) -> LeakageLedger:
    if not key:
        raise ValueError("cannot reconcile an empty key")
    side = EmitterSide(key, link, session_id, rng, params.permute_between_passes)
    return await side.run(block_lengths(len(key), params, qber))


async def reconcile_receiver(key: list[int], params, qber, link, session_id, on_pass=None) -> LeakageLedger:
    """Reconcile in place: ``key`` is corrected as errors are located."""
    if not key:
        raise ValueError("cannot reconcile an empty key")
    side = ReceiverSide(key, link, session_id, params.permute_between_passes)
    return await side.run(block_lengths(len(key), params, qber), on_pass)


# --- two-sided conveniences (both parties in one process) -----------------

def reconcile(key_a, key_b, params: ReconciliationParams, qber_estimate: float, rng: RandomSource,
              *, channel: Optional[ClassicalChannel] = None, trace: Optional[list] = None,
              session_id: str = "local"):
    """Run both sides over an in-memory channel; returns ``(key_a, key_b, ledger)``.

    ``trace``, when given, receives the receiver key after every pass.
    """
    if len(key_a) != len(key_b):
        raise ValueError("keys differ in length")
    channel = channel or ClassicalChannel()
    b = list(key_b)
    on_pass = (lambda p, k: trace.append(k)) if trace is not None else None

    async def both():
        return await asyncio.gather(
            reconcile_emitter(list(key_a), params, qber_estimate, channel.emitter, rng, session_id),
            reconcile_receiver(b, params, qber_estimate, channel.receiver, session_id, on_pass),
        )

    ledger_a, ledger_b = asyncio.run(both())
    assert ledger_a == ledger_b
    return list(key_a), b, ledger_a


def locate_error(key_a, key_b, start: int, stop: int, *, channel: Optional[ClassicalChannel] = None,
                 session_id: str = "local") -> tuple[int, LeakageLedger]:
    """Find one differing position in ``[start, stop)`` by parity bisection.

    The ledger counts every disclosed parity, including the entry comparison
    of the whole range.
    """
    if len(key_a) != len(key_b):
        raise ValueError("keys differ in length")
    if not 0 <= start < stop <= len(key_a):
        raise IndexError(f"range [{start}, {stop}) outside key")
    channel = channel or ClassicalChannel()
    a = EmitterSide(key_a, channel.emitter, session_id, RandomSource(0))
    b = ReceiverSide(list(key_b), channel.receiver, session_id)
    a.order = b.order = list(range(len(key_a)))

    async def side(s):
        if not await s.probe(0, start, stop):
            raise ProtocolViolation("parities agree on entry; nothing to locate")
        return await s.bisect(0, start, stop)

    async def both():
        return await asyncio.gather(side(a), side(b))

    ia, ib = asyncio.run(both())
    assert ia == ib
    return ia, a.ledger
