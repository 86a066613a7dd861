"""Quantum and classical channels between the two protocol endpoints."""

from __future__ import annotations

import asyncio
from typing import Callable, Iterable, Optional

from . import quantum
from .quantum import Basis, Polarization
from .rng import RandomSource
from .wire import ClassicalMessage


class TransmissionError(RuntimeError):
    """The channel is closed or the peer went away."""


class PhotonConsumedError(RuntimeError):
    """A photon was measured a second time."""


class Photon:
    """Single-use handle on a delivered photon.

    The polarization is private; the only way to learn anything about it is
    :meth:`measure`, which works once.
    """

    __slots__ = ("_state",)

    def __init__(self, state: Polarization) -> None:
        self._state: Optional[Polarization] = state

    def __repr__(self) -> str:
        return "Photon(consumed)" if self._state is None else "Photon(<unmeasured>)"

    @property
    def consumed(self) -> bool:
        return self._state is None

    def measure(self, basis: Basis, rng: RandomSource) -> int:
        if self._state is None:
            raise PhotonConsumedError("photon already measured")
        state, self._state = self._state, None
        outcome, _ = quantum.measure(state, basis, rng)
        return outcome

    def take(self) -> Polarization:
        """Remove the raw state (for relaying over a wire). Consumes the photon."""
        if self._state is None:
            raise PhotonConsumedError("photon already measured")
        state, self._state = self._state, None
        return state


Interceptor = Callable[[Polarization], Polarization]

_CLOSED = object()


class QuantumChannel:
    """Fiber model: in-basis bit-flip noise, then an optional interceptor.

    ``deliver`` receives each transmitted pulse train as a list of
    polarization states. When omitted the channel keeps an in-memory queue
    drained with :meth:`receive`.
    """

    def __init__(
        self,
        noise_flip_prob: float = 0.0,
        rng: Optional[RandomSource] = None,
        interceptor: Optional[Interceptor] = None,
        deliver: Optional[Callable[[list[Polarization]], None]] = None,
    ) -> None:
        if not 0.0 <= noise_flip_prob <= 1.0:
            raise ValueError("noise_flip_prob must lie in [0, 1]")
        if noise_flip_prob > 0 and rng is None:
            raise ValueError("a noisy channel needs a random source")
        self.noise_flip_prob = noise_flip_prob
        self.rng = rng
        self.interceptor = interceptor
        self.delivered_count = 0
        self.closed = False
        self._deliver = deliver
        self._queue: asyncio.Queue = asyncio.Queue()

    def send_photon(self, photon: Polarization) -> Polarization:
        """Push one photon through the fiber and return what comes out."""
        if self.closed:
            raise TransmissionError("quantum channel closed")
        if self.rng is not None and self.rng.random() < self.noise_flip_prob:
            photon = quantum.encode(1 - quantum.decode(photon), photon.basis)
        if self.interceptor is not None:
            photon = self.interceptor(photon)
        self.delivered_count += 1
        return photon

    def transmit(self, photons: Iterable[Polarization]) -> None:
        delivered = [self.send_photon(p) for p in photons]
        if self._deliver is not None:
            self._deliver(delivered)
        else:
            self._queue.put_nowait(delivered)

    async def receive(self) -> list[Photon]:
        item = await self._queue.get()
        if item is _CLOSED:
            raise TransmissionError("quantum channel closed")
        return [Photon(s) for s in item]

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._queue.put_nowait(_CLOSED)


Wiretap = Callable[[ClassicalMessage], None]


class ClassicalEndpoint:
    """One side of an in-memory, authenticated but public channel."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.peer: Optional[ClassicalEndpoint] = None
        self.wiretaps: list[Wiretap] = []
        self.closed = False

    def send(self, msg: ClassicalMessage) -> None:
        if not isinstance(msg, ClassicalMessage):
            raise TypeError(f"expected ClassicalMessage, got {type(msg).__name__}")
        if self.closed or self.peer is None or self.peer.closed:
            raise TransmissionError(f"classical channel closed ({self.name})")
        self.peer.inbox.put_nowait(msg)
        for tap in self.wiretaps:
            tap(msg)

    async def recv(self) -> ClassicalMessage:
        item = await self.inbox.get()
        if item is _CLOSED:
            raise TransmissionError(f"classical channel closed ({self.name})")
        return item

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        if self.peer is not None:
            self.peer.inbox.put_nowait(_CLOSED)


class ClassicalChannel:
    """FIFO queue pair; every wiretap sees each delivered message once, in order."""

    def __init__(self, wiretap: Optional[Wiretap] = None) -> None:
        self.emitter = ClassicalEndpoint("emitter")
        self.receiver = ClassicalEndpoint("receiver")
        self.emitter.peer, self.receiver.peer = self.receiver, self.emitter
        self.log: list[ClassicalMessage] = []
        self.attach(self.log.append)
        if wiretap is not None:
            self.attach(wiretap)

    def attach(self, wiretap: Wiretap) -> None:
        self.emitter.wiretaps.append(wiretap)
        self.receiver.wiretaps.append(wiretap)

    def close(self) -> None:
        self.emitter.close()
        self.receiver.close()


class PeerAborted(Exception):
    """The peer sent an Abort message."""

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class ProtocolViolation(RuntimeError):
    """The peer sent a message the local state machine did not expect."""


async def expect(link, *tags) -> ClassicalMessage:
    """Receive the next message and check its tag; an Abort is raised as :class:`PeerAborted`."""
    msg = await link.recv()
    if msg.tag.value == "Abort" and "Abort" not in {t.value for t in tags}:
        raise PeerAborted(msg["reason"])
    if msg.tag not in tags:
        wanted = "/".join(t.value for t in tags)
        raise ProtocolViolation(f"expected {wanted}, got {msg.tag.value}")
    return msg
