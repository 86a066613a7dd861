import asyncio

import pytest

from qkdsim.channel import (ClassicalChannel, Photon, PhotonConsumedError, QuantumChannel,
                            TransmissionError)
from qkdsim.quantum import Basis, Polarization as P
from qkdsim.rng import RandomSource
from qkdsim.wire import Tag, message

R, D = Basis.RECTILINEAR, Basis.DIAGONAL


def test_identity_channel():
    ch = QuantumChannel(0.0, RandomSource(1))
    assert ch.send_photon(P.DEG45) == P.DEG45
    assert ch.delivered_count == 1


def test_certain_flip_stays_in_basis():
    ch = QuantumChannel(1.0, RandomSource(1))
    assert ch.send_photon(P.DEG0) == P.DEG90
    assert ch.send_photon(P.SPIN_R) == P.SPIN_L


def test_noise_rate():
    ch = QuantumChannel(0.1, RandomSource(77))
    flipped = sum(ch.send_photon(P.DEG0) == P.DEG90 for _ in range(10_000))
    # binomial 3 sigma for p = 0.1, n = 1e4 is 0.009
    assert abs(flipped / 10_000 - 0.10) <= 0.01


def test_interceptor_runs_after_noise():
    seen = []

    def spy(photon):
        seen.append(photon)
        return P.DEG45

    ch = QuantumChannel(1.0, RandomSource(1), interceptor=spy)
    assert ch.send_photon(P.DEG0) == P.DEG45
    assert seen == [P.DEG90]


def test_noise_probability_validated():
    with pytest.raises(ValueError):
        QuantumChannel(1.5, RandomSource(1))


def test_closed_quantum_channel():
    ch = QuantumChannel()
    ch.close()
    with pytest.raises(TransmissionError):
        ch.send_photon(P.DEG0)


def test_photon_measured_once():
    photon = Photon(P.DEG90)
    assert photon.measure(R, RandomSource(1)) == 1
    assert photon.consumed
    with pytest.raises(PhotonConsumedError):
        photon.measure(R, RandomSource(1))
    with pytest.raises(PhotonConsumedError):
        photon.take()


def test_delivered_photons_are_single_use():
    async def go():
        ch = QuantumChannel()
        ch.transmit([P.DEG0, P.DEG135])
        photons = await ch.receive()
        assert [p.measure(s.basis, RandomSource(0)) for p, s in zip(photons, [P.DEG0, P.DEG135])] == [0, 1]
        with pytest.raises(PhotonConsumedError):
            photons[0].measure(R, RandomSource(0))

    asyncio.run(go())


def test_fifo_and_lossless():
    async def go():
        ch = ClassicalChannel()
        bases = message(Tag.BASES, "s", bases=[R, D, R])
        second = message(Tag.DONE, "s", length=3)
        ch.emitter.send(bases)
        ch.emitter.send(second)
        assert await ch.receiver.recv() == bases
        assert await ch.receiver.recv() == second

    asyncio.run(go())


def test_wiretap_copies_delivered_sequence():
    tapped = []

    async def go():
        ch = ClassicalChannel(wiretap=tapped.append)
        msgs = [message(Tag.CHECK_BITS, "s", bits=[0, 1]), message(Tag.DONE, "s", length=1)]
        ch.emitter.send(msgs[0])
        ch.receiver.send(msgs[1])
        got = [await ch.receiver.recv(), await ch.emitter.recv()]
        return msgs, got

    msgs, got = asyncio.run(go())
    assert tapped == msgs == got


def test_closed_classical_channel():
    async def go():
        ch = ClassicalChannel()
        ch.emitter.close()
        with pytest.raises(TransmissionError):
            ch.emitter.send(message(Tag.DONE, "s", length=1))
        with pytest.raises(TransmissionError):
            await ch.receiver.recv()

    asyncio.run(go())


def test_send_rejects_non_messages():
    ch = ClassicalChannel()
    with pytest.raises(TypeError):
        ch.emitter.send({"tag": "Done"})
