"""BB84 emitter/receiver state machines and the in-process session driver.

Public discussion schedule (one canonical order, so transcripts reproduce):

1. emitter -> Bases            every basis it used
2. receiver -> MatchIndices    positions where the receiver chose the same basis
3. emitter -> CheckRequest     sampled positions of the sifted key plus its bits there
4. receiver -> CheckBits       its own bits at those positions
5. emitter -> Abort            if the QBER exceeds the threshold (session ends)
6. reconciliation              BlockParity / ParityReply / Permute exchanges
7. emitter -> DiscardIndices   positions located during reconciliation
8. emitter -> Permute          amplification seed and the number of bits dropped
9. emitter -> Done, receiver -> Done   final key length, echoed
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import quantum
from .adversary import Eve, KnowledgeSummary
from .amplification import AmplificationParams, amplify, final_length
from .channel import (ClassicalChannel, PeerAborted, ProtocolViolation, QuantumChannel,
                      TransmissionError, expect)
from .keys import KeyMaterial, Stage
from .quantum import THREE_BASES, TWO_BASES, Basis, ValidationError
from .reconciliation import LeakageLedger, ReconciliationParams, reconcile_emitter, reconcile_receiver
from .rng import RandomSource, derive_seed
from .wire import ClassicalMessage, Tag, message

TWO_BASIS = "two_basis"
THREE_BASIS = "three_basis"

QBER_EXCEEDED = "qber_exceeded"
KEY_EXHAUSTED = "key_exhausted"
TRANSPORT = "transport"


def allowed_bases(bases_mode: str) -> tuple[Basis, ...]:
    if bases_mode == TWO_BASIS:
        return TWO_BASES
    if bases_mode == THREE_BASIS:
        return THREE_BASES
    raise ValidationError(f"unknown bases mode {bases_mode!r}")


def _draw_basis(bases: tuple[Basis, ...], rng: RandomSource) -> Basis:
    # two bases: one bit; three: rejection-sampled index
    if len(bases) == 2:
        return bases[rng.bit()]
    return bases[rng.below(len(bases))]


@dataclass(frozen=True)
class SessionConfig:
    n: int = 4096
    bases_mode: str = TWO_BASIS
    check_fraction: float = 0.25
    check_count: Optional[int] = None  # fixed number of check bits, overrides check_fraction
    qber_threshold: float = 0.11
    noise_flip_prob: float = 0.0
    eve_intercept_prob: float = 0.0
    photon_loss_prob: float = 0.0  # reserved: loss is not modeled, only 0 is accepted
    seed_emitter: int = 1
    seed_receiver: int = 2
    seed_eve: int = 3
    seed_channel: int = 4
    reconciliation: ReconciliationParams = field(default_factory=ReconciliationParams)
    security_margin: int = 16
    session_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.n < 16:
            raise ValidationError("n must be >= 16")
        allowed_bases(self.bases_mode)
        if not 0.0 < self.check_fraction < 1.0:
            raise ValidationError("check_fraction must lie in (0, 1)")
        if self.check_count is not None and self.check_count < 1:
            raise ValidationError("check_count must be >= 1")
        for name in ("qber_threshold", "noise_flip_prob", "eve_intercept_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.photon_loss_prob != 0.0:
            raise ValidationError("photon loss is not modeled; photon_loss_prob must be 0")
        for name in ("seed_emitter", "seed_receiver", "seed_eve", "seed_channel"):
            if not 0 <= getattr(self, name) < 1 << 64:
                raise ValidationError(f"{name} must be a 64-bit value")
        if self.security_margin < 0:
            raise ValidationError("security_margin must be >= 0")
        if self.session_id is None:
            object.__setattr__(self, "session_id", f"{self.seed_emitter:016x}")

    @classmethod
    def from_seed(cls, seed: int, **kwargs) -> "SessionConfig":
        """Config whose four seeds are derived from one root seed."""
        seeds = {f"seed_{role}": derive_seed(seed, role) for role in ("emitter", "receiver", "eve", "channel")}
        return cls(**{**seeds, **kwargs})


# --- protocol steps -------------------------------------------------------

def emitter_prepare(n: int, bases_mode: str, rng: RandomSource):
    """Random bits ``s``, random bases ``b`` and the photons ``p[i] = encode(s[i], b[i])``."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    bases = allowed_bases(bases_mode)
    s, b, p = [], [], []
    for _ in range(n):
        bit = rng.bit()
        basis = _draw_basis(bases, rng)
        s.append(bit)
        b.append(basis)
        p.append(quantum.encode(bit, basis))
    return s, b, p


def receiver_measure(photons, bases_mode: str, rng: RandomSource, forced_bases: Optional[Sequence[Basis]] = None):
    """Measure each photon in a random (or forced) basis; returns ``(b', s')``."""
    bases = allowed_bases(bases_mode)
    chosen, bits = [], []
    for i, photon in enumerate(photons):
        basis = forced_bases[i] if forced_bases is not None else _draw_basis(bases, rng)
        chosen.append(basis)
        bits.append(photon.measure(basis, rng))
    return chosen, bits


def sift(b, b_prime, s, s_prime):
    if not len(b) == len(b_prime) == len(s) == len(s_prime):
        raise ValidationError("sift inputs differ in length")
    kept = [i for i in range(len(b)) if b[i] == b_prime[i]]
    return kept, [s[i] for i in kept], [s_prime[i] for i in kept]


class KeyExhaustedError(ValidationError):
    reason = KEY_EXHAUSTED


def check_sample_size(sifted_len: int, check_fraction: float, check_count: Optional[int] = None) -> int:
    size = check_count if check_count is not None else round(check_fraction * sifted_len)
    return max(size, 1)


def sample_check_bits(sifted_len: int, check_fraction: float, rng: RandomSource,
                      check_count: Optional[int] = None) -> list[int]:
    """Sorted uniform subset of sifted positions to disclose for QBER estimation."""
    if sifted_len < 1:
        raise KeyExhaustedError("sifted key is empty")
    size = check_sample_size(sifted_len, check_fraction, check_count)
    if size >= sifted_len:
        raise KeyExhaustedError(f"{size} check bits would consume the whole {sifted_len}-bit key")
    return rng.sample(sifted_len, size)


def estimate_qber(emitter_check_bits, receiver_check_bits) -> float:
    if len(emitter_check_bits) != len(receiver_check_bits):
        raise ValidationError("check bit strings differ in length")
    if not emitter_check_bits:
        raise ValidationError("no check bits")
    errors = sum(a != b for a, b in zip(emitter_check_bits, receiver_check_bits))
    return errors / len(emitter_check_bits)


def remove_positions(bits, positions) -> list[int]:
    drop = set(positions)
    return [b for i, b in enumerate(bits) if i not in drop]


# --- endpoints ------------------------------------------------------------

@dataclass(frozen=True)
class TranscriptEntry:
    sender: str
    message: ClassicalMessage


class RecordingLink:
    """Wraps a classical endpoint and records every message in causal order."""

    def __init__(self, link, me: str, peer: str) -> None:
        self.link = link
        self.me, self.peer = me, peer
        self.entries: list[TranscriptEntry] = []

    def send(self, msg: ClassicalMessage) -> None:
        self.link.send(msg)
        self.entries.append(TranscriptEntry(self.me, msg))

    async def recv(self) -> ClassicalMessage:
        msg = await self.link.recv()
        self.entries.append(TranscriptEntry(self.peer, msg))
        return msg


@dataclass
class EndpointResult:
    keys: dict = field(default_factory=dict)  # Stage -> KeyMaterial
    qber: Optional[float] = None
    detected: bool = False
    aborted: bool = False
    reason: Optional[str] = None
    ledger: Optional[LeakageLedger] = None
    transcript: list = field(default_factory=list)
    kept_indices: Optional[list[int]] = None

    @property
    def key(self) -> Optional[KeyMaterial]:
        return self.keys[max(self.keys)] if self.keys else None

    def stage(self, key: KeyMaterial) -> KeyMaterial:
        self.keys[key.stage] = key
        return key


class _Endpoint:
    role = ""
    peer_role = ""

    def __init__(self, config: SessionConfig, link) -> None:
        self.config = config
        self.sid = config.session_id
        self.link = RecordingLink(link, self.role, self.peer_role)
        self.result = EndpointResult(transcript=self.link.entries)

    async def run(self) -> EndpointResult:
        try:
            await self._run()
        except PeerAborted as exc:
            self._abort(exc.reason)
        except TransmissionError:
            self._abort(TRANSPORT)
        return self.result

    def _abort(self, reason: str, *, announce: bool = False) -> None:
        if announce:
            self.link.send(message(Tag.ABORT, self.sid, reason=reason))
        self.result.aborted = True
        self.result.reason = reason
        if reason == QBER_EXCEEDED:
            self.result.detected = True

    def _final_length(self, reconciled: KeyMaterial, ledger: LeakageLedger) -> int:
        return final_length(len(reconciled), len(ledger.discarded_positions),
                            ledger.disclosed_parities, self.config.security_margin)

    async def _run(self) -> None:
        raise NotImplementedError


class Emitter(_Endpoint):
    role, peer_role = "emitter", "receiver"

    def __init__(self, config: SessionConfig, quantum_channel: QuantumChannel, link, rng: RandomSource) -> None:
        super().__init__(config, link)
        self.quantum = quantum_channel
        self.rng = rng

    async def _run(self) -> None:
        cfg, res, link, sid = self.config, self.result, self.link, self.sid
        s, b, p = emitter_prepare(cfg.n, cfg.bases_mode, self.rng)
        raw = res.stage(KeyMaterial(s, Stage.RAW))
        self.quantum.transmit(p)

        link.send(message(Tag.BASES, sid, bases=b))
        kept = list((await expect(link, Tag.MATCH_INDICES))["indices"])
        if kept and kept[-1] >= cfg.n:
            raise ProtocolViolation("match index beyond the raw key")
        res.kept_indices = kept
        sifted = res.stage(raw.advance([s[i] for i in kept], Stage.SIFTED))

        try:
            check = sample_check_bits(len(sifted), cfg.check_fraction, self.rng, cfg.check_count)
        except KeyExhaustedError:
            return self._abort(KEY_EXHAUSTED, announce=True)
        mine = [sifted.bits[i] for i in check]
        link.send(message(Tag.CHECK_REQUEST, sid, indices=check, bits=mine))
        theirs = (await expect(link, Tag.CHECK_BITS))["bits"]
        if len(theirs) != len(check):
            raise ProtocolViolation("wrong number of check bits")
        res.qber = estimate_qber(mine, theirs)
        checked = res.stage(sifted.advance(remove_positions(sifted.bits, check), Stage.CHECKED))
        if res.qber > cfg.qber_threshold:
            return self._abort(QBER_EXCEEDED, announce=True)

        ledger = await reconcile_emitter(list(checked.bits), cfg.reconciliation, res.qber, link, self.rng, sid)
        res.ledger = ledger
        reconciled = res.stage(checked.advance(checked.bits, Stage.RECONCILED, ledger.disclosed_parities))

        link.send(message(Tag.DISCARD_INDICES, sid, indices=sorted(ledger.discarded_positions)))
        if self._final_length(reconciled, ledger) <= 0:
            return self._abort(KEY_EXHAUSTED, announce=True)
        seed = self.rng.next_u64()
        drop = ledger.disclosed_parities + cfg.security_margin
        link.send(message(Tag.PERMUTE, sid, purpose="amplify", seed=seed, discard=drop))
        final = res.stage(amplify(reconciled, ledger, AmplificationParams(cfg.security_margin, seed)))

        link.send(message(Tag.DONE, sid, length=len(final)))
        echo = await expect(link, Tag.DONE)
        if echo["length"] != len(final):
            raise ProtocolViolation("peer distilled a key of different length")


class Receiver(_Endpoint):
    role, peer_role = "receiver", "emitter"

    def __init__(self, config: SessionConfig, quantum_port, link, rng: RandomSource) -> None:
        super().__init__(config, link)
        self.quantum = quantum_port
        self.rng = rng

    async def _run(self) -> None:
        cfg, res, link, sid = self.config, self.result, self.link, self.sid
        photons = await self.quantum.receive()
        if len(photons) != cfg.n:
            raise ProtocolViolation(f"expected {cfg.n} photons, got {len(photons)}")
        b_prime, s_prime = receiver_measure(photons, cfg.bases_mode, self.rng)
        raw = res.stage(KeyMaterial(s_prime, Stage.RAW))

        b = (await expect(link, Tag.BASES))["bases"]
        if len(b) != cfg.n:
            raise ProtocolViolation("announced bases do not match the photon count")
        kept = [i for i in range(cfg.n) if b[i] == b_prime[i]]
        res.kept_indices = kept
        link.send(message(Tag.MATCH_INDICES, sid, indices=kept))
        sifted = res.stage(raw.advance([s_prime[i] for i in kept], Stage.SIFTED))

        req = await expect(link, Tag.CHECK_REQUEST)
        check, theirs = list(req["indices"]), req["bits"]
        if len(check) != len(theirs) or (check and check[-1] >= len(sifted)):
            raise ProtocolViolation("malformed check request")
        mine = [sifted.bits[i] for i in check]
        link.send(message(Tag.CHECK_BITS, sid, bits=mine))
        res.qber = estimate_qber(theirs, mine)
        checked = res.stage(sifted.advance(remove_positions(sifted.bits, check), Stage.CHECKED))
        if res.qber > cfg.qber_threshold:
            await expect(link, Tag.ABORT)
            return self._abort(QBER_EXCEEDED)

        key = list(checked.bits)
        ledger = await reconcile_receiver(key, cfg.reconciliation, res.qber, link, sid)
        res.ledger = ledger
        reconciled = res.stage(checked.advance(key, Stage.RECONCILED, ledger.disclosed_parities))

        discard = (await expect(link, Tag.DISCARD_INDICES))["indices"]
        if set(discard) != ledger.discarded_positions:
            raise ProtocolViolation("discard lists disagree")
        if self._final_length(reconciled, ledger) <= 0:
            await expect(link, Tag.ABORT)
            return self._abort(KEY_EXHAUSTED)
        perm = await expect(link, Tag.PERMUTE)
        if perm["purpose"] != "amplify" or perm["discard"] != ledger.disclosed_parities + cfg.security_margin:
            raise ProtocolViolation("amplification parameters disagree")
        final = res.stage(amplify(reconciled, ledger, AmplificationParams(cfg.security_margin, perm["seed"])))

        done = await expect(link, Tag.DONE)
        link.send(message(Tag.DONE, sid, length=len(final)))
        if done["length"] != len(final):
            raise ProtocolViolation("peer distilled a key of different length")


# --- session --------------------------------------------------------------

@dataclass
class SessionOutcome:
    config: SessionConfig
    emitter: EndpointResult
    receiver: EndpointResult
    adversary_summary: Optional[KnowledgeSummary] = None

    @property
    def emitter_key(self) -> Optional[KeyMaterial]:
        return self.emitter.key

    @property
    def receiver_key(self) -> Optional[KeyMaterial]:
        return self.receiver.key

    @property
    def qber_estimate(self) -> Optional[float]:
        return self.emitter.qber

    @property
    def detected(self) -> bool:
        return self.emitter.detected

    @property
    def aborted(self) -> bool:
        return self.emitter.aborted or self.receiver.aborted

    @property
    def reason(self) -> Optional[str]:
        return self.emitter.reason or self.receiver.reason

    @property
    def transcript(self) -> list[TranscriptEntry]:
        return self.emitter.transcript

    @property
    def ledger(self) -> Optional[LeakageLedger]:
        return self.emitter.ledger

    def keys_at(self, stage: Stage) -> tuple[Optional[KeyMaterial], Optional[KeyMaterial]]:
        return self.emitter.keys.get(stage), self.receiver.keys.get(stage)


def make_eve(config: SessionConfig) -> Eve:
    return Eve(config.eve_intercept_prob, RandomSource(config.seed_eve), allowed_bases(config.bases_mode))


async def run_endpoints(config: SessionConfig, quantum_channel, emitter_link, receiver_port, receiver_link):
    """Run both endpoints concurrently on the current event loop."""
    emitter = Emitter(config, quantum_channel, emitter_link, RandomSource(config.seed_emitter))
    receiver = Receiver(config, receiver_port, receiver_link, RandomSource(config.seed_receiver))

    async def guarded(endpoint, *closers):
        try:
            return await endpoint.run()
        finally:
            for close in closers:
                close()

    return await asyncio.gather(
        guarded(emitter, emitter_link.close, quantum_channel.close),
        guarded(receiver, receiver_link.close),
    )


def run_session(config: SessionConfig, *, adversary: Optional[bool] = None) -> SessionOutcome:
    """Run one session in-process over in-memory channels.

    An eavesdropper is attached when ``config.eve_intercept_prob > 0`` or when
    ``adversary=True``.
    """
    attach = config.eve_intercept_prob > 0 if adversary is None else adversary
    eve = make_eve(config) if attach else None
    classical = ClassicalChannel(wiretap=eve.observe if eve else None)
    quantum_channel = QuantumChannel(config.noise_flip_prob, RandomSource(config.seed_channel), interceptor=eve)
    em, rc = asyncio.run(run_endpoints(config, quantum_channel, classical.emitter, quantum_channel, classical.receiver))
    summary = None
    if eve is not None and em.kept_indices is not None:
        summary = eve.summary()
    return SessionOutcome(config, em, rc, summary)


# --- transcript export ----------------------------------------------------

def transcript_lines(outcome: SessionOutcome) -> list[str]:
    """JSON-lines records: one per classical message, then one digest per stage."""
    lines = []
    for seq, entry in enumerate(outcome.transcript):
        record = {"kind": "message", "seq": seq, "from": entry.sender, **entry.message.to_json()}
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    for stage in Stage:
        a, b = outcome.keys_at(stage)
        if a is None and b is None:
            continue
        record = {
            "kind": "digest",
            "stage": stage.name.lower(),
            "emitter": {"length": len(a), "sha256": a.digest()} if a else None,
            "receiver": {"length": len(b), "sha256": b.digest()} if b else None,
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    return lines


def write_transcript(outcome: SessionOutcome, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in transcript_lines(outcome):
            fh.write(line + "\n")
