"""Socket transport: one endpoint per process, or an eavesdropping proxy between them.

Each session uses two TCP connections, opened by the emitter side. The first
line on each is ``QKDSIM/1 <session-id> <stream>\\n`` where ``<stream>`` is
``quantum`` or ``classical``; the listener accepts by echoing the same line.
After the handshake both streams carry length-prefixed frames (see
:mod:`qkdsim.wire`). The quantum stream carries ``Photons`` frames with the
hidden polarization in the clear: honesty is enforced by this library, not by
physics.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Optional

from .adversary import Eve
from .channel import Photon, QuantumChannel, TransmissionError
from .protocol import EndpointResult, Emitter, Receiver, SessionConfig, TRANSPORT
from .rng import RandomSource
from .wire import WireError, decode_photons, decode_wire, encode_photons, encode_wire, frame_length

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "QKDSIM/1"
STREAMS = ("quantum", "classical")
DEFAULT_TIMEOUT = 30.0


class HandshakeError(RuntimeError):
    """Version, session or stream mismatch while opening a connection."""


def handshake_line(session_id: str, stream: str) -> bytes:
    return f"{PROTOCOL_VERSION} {session_id} {stream}\n".encode()


def parse_handshake(line: bytes) -> tuple[str, str]:
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError:
        raise HandshakeError("handshake is not ASCII") from None
    if not text.endswith("\n"):
        raise HandshakeError("handshake line not terminated")
    parts = text[:-1].split(" ")
    if len(parts) != 3 or parts[0] != PROTOCOL_VERSION:
        raise HandshakeError(f"bad handshake {text.strip()!r}, expected {PROTOCOL_VERSION}")
    if parts[2] not in STREAMS:
        raise HandshakeError(f"unknown stream {parts[2]!r}")
    return parts[1], parts[2]


async def read_frame(reader: asyncio.StreamReader, timeout: Optional[float] = DEFAULT_TIMEOUT) -> bytes:
    """Read one complete frame (length prefix included)."""
    try:
        header = await asyncio.wait_for(reader.readexactly(4), timeout)
        body = await asyncio.wait_for(reader.readexactly(frame_length(header)), timeout)
    except asyncio.IncompleteReadError:
        raise TransmissionError("connection closed mid-session") from None
    except (asyncio.TimeoutError, ConnectionError) as exc:
        raise TransmissionError(f"transport failure: {exc!r}") from None
    return header + body


async def _read_line(reader: asyncio.StreamReader, timeout: Optional[float]) -> bytes:
    try:
        line = await asyncio.wait_for(reader.readline(), timeout)
    except (asyncio.TimeoutError, ConnectionError, ValueError) as exc:
        raise HandshakeError(f"no handshake: {exc!r}") from None
    if not line:
        raise HandshakeError("peer closed the connection during the handshake")
    return line


def _close(writer: asyncio.StreamWriter) -> None:
    if not writer.is_closing():
        writer.close()


class SocketLink:
    """Classical endpoint over a stream connection."""

    def __init__(self, reader, writer, timeout: Optional[float] = DEFAULT_TIMEOUT) -> None:
        self.reader, self.writer, self.timeout = reader, writer, timeout

    def send(self, msg) -> None:
        if self.writer.is_closing():
            raise TransmissionError("classical connection closed")
        self.writer.write(encode_wire(msg))

    async def recv(self):
        frame = await read_frame(self.reader, self.timeout)
        try:
            return decode_wire(frame)
        except WireError as exc:
            raise TransmissionError(f"undecodable frame: {exc}") from None

    def close(self) -> None:
        _close(self.writer)


class SocketQuantumPort:
    """Receiver side of the quantum stream."""

    def __init__(self, reader, writer, session_id: str, timeout: Optional[float] = DEFAULT_TIMEOUT) -> None:
        self.reader, self.writer, self.sid, self.timeout = reader, writer, session_id, timeout

    async def receive(self) -> list[Photon]:
        frame = await read_frame(self.reader, self.timeout)
        try:
            sid, states = decode_photons(frame)
        except WireError as exc:
            raise TransmissionError(f"undecodable photon frame: {exc}") from None
        if sid != self.sid:
            raise TransmissionError(f"photon frame for session {sid!r}")
        return [Photon(s) for s in states]

    def close(self) -> None:
        _close(self.writer)


def socket_quantum_channel(config: SessionConfig, writer) -> QuantumChannel:
    """Emitter-side fiber: noise is applied locally, then frames go on the wire."""
    channel = QuantumChannel(
        config.noise_flip_prob,
        RandomSource(config.seed_channel),
        deliver=lambda states: writer.write(encode_photons(config.session_id, states)),
    )
    original_close = channel.close

    def close() -> None:
        original_close()
        _close(writer)

    channel.close = close
    return channel


async def open_streams(host: str, port: int, session_id: str, timeout: Optional[float] = DEFAULT_TIMEOUT,
                       version: str = PROTOCOL_VERSION):
    """Dial both streams and complete the handshake; returns ``{stream: (reader, writer)}``."""
    streams = {}
    try:
        for stream in STREAMS:
            try:
                reader, writer = await asyncio.open_connection(host, port)
            except OSError as exc:
                raise TransmissionError(f"cannot connect to {host}:{port}: {exc}") from None
            streams[stream] = (reader, writer)
            line = f"{version} {session_id} {stream}\n".encode()
            writer.write(line)
            ack = await _read_line(reader, timeout)
            if ack != line:
                raise HandshakeError(f"handshake rejected: {ack!r}")
    except BaseException:
        for _, w in streams.values():
            _close(w)
        raise
    return streams


async def accept_streams(server_ready: Callable, session_id: Optional[str], host: str, port: int,
                         timeout: Optional[float] = DEFAULT_TIMEOUT):
    """Listen until one quantum and one classical connection completed the handshake.

    Returns ``(session_id, {stream: (reader, writer)})``. A malformed
    handshake closes that connection and raises :class:`HandshakeError`.
    """
    loop = asyncio.get_running_loop()
    done: asyncio.Future = loop.create_future()
    streams: dict = {}
    seen_session = [session_id]

    async def on_connect(reader, writer):
        try:
            line = await _read_line(reader, timeout)
            sid, stream = parse_handshake(line)
            if seen_session[0] is None:
                seen_session[0] = sid
            if sid != seen_session[0]:
                raise HandshakeError(f"session {sid!r} does not match {seen_session[0]!r}")
            if stream in streams:
                raise HandshakeError(f"duplicate {stream} stream")
            writer.write(line)
            streams[stream] = (reader, writer)
            if len(streams) == len(STREAMS) and not done.done():
                done.set_result(None)
        except HandshakeError as exc:
            _close(writer)
            if not done.done():
                done.set_exception(exc)

    server = await asyncio.start_server(on_connect, host, port)
    try:
        server_ready(server.sockets[0].getsockname()[:2])
        await done
    finally:
        server.close()
    return seen_session[0], streams


async def run_receiver_socket(config: SessionConfig, host: str = "127.0.0.1", port: int = 0,
                              on_listening: Callable = lambda addr: None,
                              timeout: Optional[float] = DEFAULT_TIMEOUT) -> EndpointResult:
    _, streams = await accept_streams(on_listening, config.session_id, host, port, timeout)
    q_reader, q_writer = streams["quantum"]
    c_reader, c_writer = streams["classical"]
    link = SocketLink(c_reader, c_writer, timeout)
    port_ = SocketQuantumPort(q_reader, q_writer, config.session_id, timeout)
    receiver = Receiver(config, port_, link, RandomSource(config.seed_receiver))
    try:
        result = await receiver.run()
        await _drain(c_writer)
    finally:
        link.close()
        port_.close()
    return result


async def run_emitter_socket(config: SessionConfig, host: str, port: int,
                             timeout: Optional[float] = DEFAULT_TIMEOUT) -> EndpointResult:
    try:
        streams = await open_streams(host, port, config.session_id, timeout)
    except TransmissionError:
        result = EndpointResult(aborted=True, reason=TRANSPORT)
        return result
    q_reader, q_writer = streams["quantum"]
    c_reader, c_writer = streams["classical"]
    link = SocketLink(c_reader, c_writer, timeout)
    channel = socket_quantum_channel(config, q_writer)
    emitter = Emitter(config, channel, link, RandomSource(config.seed_emitter))
    try:
        result = await emitter.run()
        await _drain(c_writer)
        await _drain(q_writer)
    finally:
        link.close()
        channel.close()
    return result


async def _drain(writer) -> None:
    try:
        await writer.drain()
    except ConnectionError:
        pass


# --- eavesdropping proxy ---------------------------------------------------

async def _pipe(reader, writer, transform=None, timeout=None) -> None:
    try:
        while True:
            try:
                frame = await read_frame(reader, timeout)
            except TransmissionError:
                break
            if transform is not None:
                frame = transform(frame)
            writer.write(frame)
            await writer.drain()
    except (ConnectionError, WireError) as exc:
        log.warning("proxy pipe stopped: %s", exc)
    finally:
        _close(writer)


async def run_eve_proxy(eve: Eve, listen_host: str, listen_port: int, upstream_host: str, upstream_port: int,
                        on_listening: Callable = lambda addr: None,
                        timeout: Optional[float] = DEFAULT_TIMEOUT) -> str:
    """Relay both streams, intercepting photons and copying classical traffic.

    Returns the session id once both streams have been closed.
    """
    sid, down = await accept_streams(on_listening, None, listen_host, listen_port, timeout)
    up = await open_streams(upstream_host, upstream_port, sid, timeout)

    def intercept_frame(frame: bytes) -> bytes:
        frame_sid, states = decode_photons(frame)
        return encode_photons(frame_sid, [eve.intercept(s) for s in states])

    def tap(frame: bytes) -> bytes:
        eve.observe(decode_wire(frame))
        return frame

    (qd_r, qd_w), (cd_r, cd_w) = down["quantum"], down["classical"]
    (qu_r, qu_w), (cu_r, cu_w) = up["quantum"], up["classical"]
    await asyncio.gather(
        _pipe(qd_r, qu_w, intercept_frame),
        _pipe(qu_r, qd_w),
        _pipe(cd_r, cu_w, tap),
        _pipe(cu_r, cd_w, tap),
    )
    return sid
