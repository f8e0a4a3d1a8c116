"""Wire format and transports between the plant and the cloud controller.

Frame layout: 4-byte big-endian length (counting everything after the length
field), 1-byte tag, 4-byte big-endian step index, payload.  Tags: 0x01
session setup, 0x02 step request, 0x03 step response, 0x04 halt notice.

Ciphertexts travel as a 2-byte big-endian length followed by big-endian
magnitude bytes zero-padded to the byte length of n**2.  The fixed width
keeps column byte lengths independent of their values, so message sizes
reveal nothing about which column is real.  Decoding is strict: bad tags,
truncated frames, width mismatches, and trailing bytes are all errors.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass
from typing import Callable

from .paillier import Ciphertext, PublicKey

TAG_SETUP = 0x01
TAG_REQUEST = 0x02
TAG_RESPONSE = 0x03
TAG_HALT = 0x04

MAX_FRAME_LEN = 2**32 - 1
GRID_SHAPE = (2, 6)

CipherPair = tuple[Ciphertext, Ciphertext]


class ProtocolError(Exception):
    """Malformed or inconsistent frame content."""


class TransportError(Exception):
    """Connection-level fault (refused, reset, truncated stream, timeout)."""


@dataclass(frozen=True)
class SessionSetup:
    public_key: PublicKey
    v_grid: tuple[tuple[int, ...], ...]  # state-update block, 2x6, residues
    z_grid: tuple[tuple[int, ...], ...]  # output block, 2x6, residues
    delta: float
    n_d: int


@dataclass(frozen=True)
class RequestColumn:
    x_c: CipherPair
    y: CipherPair
    r: CipherPair

    def ciphers(self) -> tuple[Ciphertext, ...]:
        return (*self.x_c, *self.y, *self.r)


@dataclass(frozen=True)
class ResponseColumn:
    u: CipherPair
    x_c_plus: CipherPair

    def ciphers(self) -> tuple[Ciphertext, ...]:
        return (*self.u, *self.x_c_plus)


@dataclass(frozen=True)
class StepRequest:
    k: int
    columns: tuple[RequestColumn, ...]


@dataclass(frozen=True)
class StepResponse:
    k: int
    columns: tuple[ResponseColumn, ...]


@dataclass(frozen=True)
class HaltNotice:
    k: int


Message = SessionSetup | StepRequest | StepResponse | HaltNotice


def _pack_varint(value: int) -> bytes:
    data = value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")
    return struct.pack(">H", len(data)) + data


class _Reader:
    """Cursor over one frame body with bounds checking."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolError("truncated frame")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def varint(self) -> int:
        (length,) = struct.unpack(">H", self.take(2))
        return int.from_bytes(self.take(length), "big")

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ProtocolError(f"{self.remaining()} trailing bytes in frame")


class Codec:
    """Encoder/decoder bound to a session's ciphertext width.

    The width (byte length of n**2) is fixed by the setup message; request
    and response frames cannot be decoded before it is known.
    """

    def __init__(self, cipher_bytes: int | None = None):
        self.cipher_bytes = cipher_bytes

    def bind(self, pk: PublicKey) -> None:
        self.cipher_bytes = pk.cipher_bytes

    # --- encoding ---

    def _pack_cipher(self, c: Ciphertext) -> bytes:
        width = self.cipher_bytes
        if width is None:
            raise ProtocolError("ciphertext width not set (no session setup)")
        try:
            body = c.to_bytes(width, "big")
        except OverflowError as exc:
            raise ProtocolError(f"ciphertext wider than {width} bytes") from exc
        return struct.pack(">H", width) + body

    def encode(self, msg: Message) -> bytes:
        if isinstance(msg, SessionSetup):
            tag, k = TAG_SETUP, 0
            grids = (*msg.v_grid, *msg.z_grid)
            if tuple(len(row) for row in grids) != (6,) * 4:
                raise ProtocolError("gain grids must be 2x6")
            payload = _pack_varint(msg.public_key.n)
            payload += struct.pack(">d", msg.delta)
            payload += struct.pack(">H", msg.n_d)
            for row in grids:
                for entry in row:
                    payload += _pack_varint(entry)
        elif isinstance(msg, StepRequest):
            tag, k = TAG_REQUEST, msg.k
            payload = b"".join(self._pack_cipher(c)
                               for col in msg.columns for c in col.ciphers())
        elif isinstance(msg, StepResponse):
            tag, k = TAG_RESPONSE, msg.k
            payload = b"".join(self._pack_cipher(c)
                               for col in msg.columns for c in col.ciphers())
        elif isinstance(msg, HaltNotice):
            tag, k = TAG_HALT, msg.k
            payload = b""
        else:
            raise ProtocolError(f"cannot encode {type(msg).__name__}")
        frame_len = 5 + len(payload)
        if frame_len > MAX_FRAME_LEN:
            raise ProtocolError("frame exceeds 32-bit length limit")
        return struct.pack(">IBI", frame_len, tag, k) + payload

    # --- decoding ---

    def _unpack_cipher(self, reader: _Reader) -> Ciphertext:
        (length,) = struct.unpack(">H", reader.take(2))
        if self.cipher_bytes is not None and length != self.cipher_bytes:
            raise ProtocolError(
                f"ciphertext field is {length} bytes, session width is "
                f"{self.cipher_bytes}"
            )
        return int.from_bytes(reader.take(length), "big")

    def _unpack_columns(self, reader: _Reader, per_column: int) -> list[tuple[int, ...]]:
        if self.cipher_bytes is None:
            raise ProtocolError("ciphertext width not set (no session setup)")
        record = 2 + self.cipher_bytes
        stride = per_column * record
        if reader.remaining() == 0 or reader.remaining() % stride != 0:
            raise ProtocolError(
                f"payload of {reader.remaining()} bytes is not a positive "
                f"multiple of the {stride}-byte column size"
            )
        count = reader.remaining() // stride
        return [tuple(self._unpack_cipher(reader) for _ in range(per_column))
                for _ in range(count)]

    def decode(self, frame: bytes) -> Message:
        if len(frame) < 9:
            raise ProtocolError("frame shorter than fixed header")
        frame_len, tag, k = struct.unpack(">IBI", frame[:9])
        if frame_len != len(frame) - 4:
            raise ProtocolError(
                f"length field says {frame_len}, frame body is {len(frame) - 4}"
            )
        reader = _Reader(frame[9:])
        if tag == TAG_SETUP:
            n = reader.varint()
            (delta,) = struct.unpack(">d", reader.take(8))
            (n_d,) = struct.unpack(">H", reader.take(2))
            entries = [reader.varint() for _ in range(24)]
            reader.done()
            rows = [tuple(entries[i:i + 6]) for i in range(0, 24, 6)]
            msg: Message = SessionSetup(
                public_key=PublicKey(n), v_grid=(rows[0], rows[1]),
                z_grid=(rows[2], rows[3]), delta=delta, n_d=n_d,
            )
        elif tag == TAG_REQUEST:
            cols = self._unpack_columns(reader, 6)
            reader.done()
            msg = StepRequest(k=k, columns=tuple(
                RequestColumn(x_c=(c[0], c[1]), y=(c[2], c[3]), r=(c[4], c[5]))
                for c in cols))
        elif tag == TAG_RESPONSE:
            cols = self._unpack_columns(reader, 4)
            reader.done()
            msg = StepResponse(k=k, columns=tuple(
                ResponseColumn(u=(c[0], c[1]), x_c_plus=(c[2], c[3]))
                for c in cols))
        elif tag == TAG_HALT:
            reader.done()
            msg = HaltNotice(k=k)
        else:
            raise ProtocolError(f"unknown message tag 0x{tag:02x}")
        return msg


def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(n - got)
        except OSError as exc:
            raise TransportError(f"socket receive failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    """Read one complete frame (length prefix included) from a stream socket."""
    header = recv_exact(sock, 4)
    (frame_len,) = struct.unpack(">I", header)
    if frame_len < 5:
        raise ProtocolError(f"frame length {frame_len} below fixed header size")
    return header + recv_exact(sock, frame_len)


def write_frame(sock: socket.socket, frame: bytes) -> None:
    try:
        sock.sendall(frame)
    except OSError as exc:
        raise TransportError(f"socket send failed: {exc}") from exc


class Transport:
    """Client-side session interface used by the plant runtime."""

    def setup(self, msg: SessionSetup) -> None:
        raise NotImplementedError

    def exchange(self, request: StepRequest) -> StepResponse:
        raise NotImplementedError

    def halt(self, k: int) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    # Seconds the cloud spent evaluating the last request, when observable
    # (loopback only); None over a real network.
    last_eval_seconds: float | None = None


class TcpTransport(Transport):
    """Synchronous request/response over one long-lived TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.codec = Codec()
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc

    def setup(self, msg: SessionSetup) -> None:
        self.codec.bind(msg.public_key)
        write_frame(self.sock, self.codec.encode(msg))

    def exchange(self, request: StepRequest) -> StepResponse:
        write_frame(self.sock, self.codec.encode(request))
        try:
            frame = read_frame(self.sock)
        except socket.timeout as exc:
            raise TransportError("timed out waiting for response") from exc
        msg = self.codec.decode(frame)
        if not isinstance(msg, StepResponse):
            raise ProtocolError(f"expected response, got {type(msg).__name__}")
        if msg.k != request.k:
            raise ProtocolError(f"response for step {msg.k}, expected {request.k}")
        return msg

    def halt(self, k: int) -> None:
        write_frame(self.sock, self.codec.encode(HaltNotice(k=k)))

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class LoopbackTransport(Transport):
    """In-process transport that still round-trips every frame through the codec.

    Messages are encoded and decoded exactly as on the wire, so framing bugs
    cannot hide behind the loopback; only the socket layer is skipped.  The
    handler's evaluation time is recorded for phase-separated benchmarks.
    """

    def __init__(self, on_setup: Callable[[SessionSetup], None],
                 on_request: Callable[[StepRequest], StepResponse],
                 on_halt: Callable[[HaltNotice], None] | None = None):
        self._on_setup = on_setup
        self._on_request = on_request
        self._on_halt = on_halt
        self._client = Codec()
        self._server = Codec()
        self.last_eval_seconds: float | None = None

    def setup(self, msg: SessionSetup) -> None:
        self._client.bind(msg.public_key)
        delivered = self._server.decode(self._client.encode(msg))
        assert isinstance(delivered, SessionSetup)
        self._server.bind(delivered.public_key)
        self._on_setup(delivered)

    def exchange(self, request: StepRequest) -> StepResponse:
        delivered = self._server.decode(self._client.encode(request))
        assert isinstance(delivered, StepRequest)
        t0 = time.perf_counter()
        response = self._on_request(delivered)
        self.last_eval_seconds = time.perf_counter() - t0
        returned = self._client.decode(self._server.encode(response))
        assert isinstance(returned, StepResponse)
        if returned.k != request.k:
            raise ProtocolError(f"response for step {returned.k}, expected {request.k}")
        return returned

    def halt(self, k: int) -> None:
        delivered = self._server.decode(self._client.encode(HaltNotice(k=k)))
        assert isinstance(delivered, HaltNotice)
        if self._on_halt is not None:
            self._on_halt(delivered)
