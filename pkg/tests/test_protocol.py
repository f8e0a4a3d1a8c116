"""Wire format framing, strict decoding, and the two transports."""

import random
import socket
import struct
import threading

import pytest

from decoyctl import protocol
from decoyctl.paillier import PublicKey
from decoyctl.protocol import (
    Codec,
    HaltNotice,
    LoopbackTransport,
    ProtocolError,
    RequestColumn,
    ResponseColumn,
    SessionSetup,
    StepRequest,
    StepResponse,
    TcpTransport,
    TransportError,
)

# Wide enough for 1024-bit moduli; exact value irrelevant to framing.
PK_1024 = PublicKey((1 << 1023) + 155)


def make_setup(pk: PublicKey, n_d: int = 1) -> SessionSetup:
    rows = tuple(tuple(range(i, i + 6)) for i in range(0, 24, 6))
    return SessionSetup(public_key=pk, v_grid=rows[:2], z_grid=rows[2:],
                        delta=1e-4, n_d=n_d)


def random_request(rng: random.Random, pk: PublicKey, columns: int, k: int) -> StepRequest:
    cipher = lambda: rng.randrange(1, pk.n_sq)
    return StepRequest(k=k, columns=tuple(
        RequestColumn(x_c=(cipher(), cipher()), y=(cipher(), cipher()),
                      r=(cipher(), cipher()))
        for _ in range(columns)
    ))


class TestFrameLayout:
    def test_halt_notice_is_nine_bytes(self):
        frame = Codec().encode(HaltNotice(k=7))
        assert frame == b"\x00\x00\x00\x05\x04\x00\x00\x00\x07"
        assert len(frame) == 9

    def test_request_frame_size_at_1024_bits(self):
        assert PK_1024.cipher_bytes == 256
        codec = Codec(PK_1024.cipher_bytes)
        request = random_request(random.Random(0), PK_1024, columns=2, k=3)
        frame = codec.encode(request)
        # 9 header bytes + 2 columns x 6 ciphertexts x (2 + 256) bytes.
        assert len(frame) == 9 + 2 * 6 * 258

    def test_fixed_width_hides_magnitudes(self):
        codec = Codec(PK_1024.cipher_bytes)
        small = StepRequest(k=0, columns=(RequestColumn((1, 1), (1, 1), (1, 1)),))
        large = random_request(random.Random(1), PK_1024, columns=1, k=0)
        assert len(codec.encode(small)) == len(codec.encode(large))

    def test_deterministic_encoding(self):
        codec = Codec(32)
        request = random_request(random.Random(2), PublicKey(1 << 127), 3, k=9)
        assert codec.encode(request) == codec.encode(request)


class TestRoundTrip:
    def test_setup(self):
        codec = Codec()
        msg = make_setup(PK_1024, n_d=4)
        assert codec.decode(codec.encode(msg)) == msg

    def test_request_various_column_counts(self):
        pk = PublicKey((1 << 255) + 19)
        codec = Codec(pk.cipher_bytes)
        rng = random.Random(3)
        for columns in (1, 2, 3, 5):
            msg = random_request(rng, pk, columns, k=rng.randrange(1 << 31))
            decoded = codec.decode(codec.encode(msg))
            assert decoded == msg

    def test_response(self):
        pk = PublicKey((1 << 255) + 19)
        codec = Codec(pk.cipher_bytes)
        rng = random.Random(4)
        msg = StepResponse(k=11, columns=tuple(
            ResponseColumn(u=(rng.randrange(1, pk.n_sq), rng.randrange(1, pk.n_sq)),
                           x_c_plus=(rng.randrange(1, pk.n_sq), rng.randrange(1, pk.n_sq)))
            for _ in range(3)
        ))
        assert codec.decode(codec.encode(msg)) == msg

    def test_column_order_preserved(self):
        pk = PublicKey((1 << 127) + 29)
        codec = Codec(pk.cipher_bytes)
        request = random_request(random.Random(5), pk, 4, k=0)
        decoded = codec.decode(codec.encode(request))
        assert decoded.columns == request.columns
        swapped = StepRequest(k=0, columns=request.columns[::-1])
        assert codec.decode(codec.encode(swapped)).columns == request.columns[::-1]


class TestStrictDecoding:
    def test_unknown_tag(self):
        frame = bytearray(Codec().encode(HaltNotice(k=0)))
        frame[4] = 0x7F
        with pytest.raises(ProtocolError, match="unknown message tag"):
            Codec().decode(bytes(frame))

    def test_length_field_mismatch(self):
        frame = Codec().encode(HaltNotice(k=0))
        with pytest.raises(ProtocolError, match="length field"):
            Codec().decode(frame + b"\x00")
        with pytest.raises(ProtocolError):
            Codec().decode(frame[:-1])

    def test_trailing_bytes_inside_frame(self):
        frame = struct.pack(">IBI", 6, protocol.TAG_HALT, 0) + b"\x00"
        with pytest.raises(ProtocolError, match="trailing"):
            Codec().decode(frame)

    def test_truncated_header(self):
        with pytest.raises(ProtocolError, match="shorter than"):
            Codec().decode(b"\x00\x00")

    def test_request_requires_session_width(self):
        pk = PublicKey((1 << 63) + 29)
        frame = Codec(pk.cipher_bytes).encode(random_request(random.Random(6), pk, 1, 0))
        with pytest.raises(ProtocolError, match="width not set"):
            Codec().decode(frame)

    def test_payload_not_a_column_multiple(self):
        pk = PublicKey((1 << 63) + 29)
        frame = Codec(pk.cipher_bytes).encode(random_request(random.Random(7), pk, 1, 0))
        wider = Codec(pk.cipher_bytes + 2)
        with pytest.raises(ProtocolError, match="multiple"):
            wider.decode(frame)

    def test_empty_request_payload_rejected(self):
        frame = struct.pack(">IBI", 5, protocol.TAG_REQUEST, 0)
        with pytest.raises(ProtocolError, match="multiple"):
            Codec(16).decode(frame)

    def test_cipher_width_mismatch_within_column(self):
        width = 16
        records = []
        for i in range(6):
            length = width - 1 if i == 0 else width
            records.append(struct.pack(">H", length) + b"\x01" * length)
        payload = b"".join(records)
        # First record is one byte short and the last padded, so the total
        # still divides evenly into one column.
        payload += b"\x00"
        payload = payload[:6 * (2 + width)]
        frame = struct.pack(">IBI", 5 + len(payload), protocol.TAG_REQUEST, 0) + payload
        with pytest.raises(ProtocolError):
            Codec(width).decode(frame)

    def test_encode_rejects_oversized_cipher(self):
        codec = Codec(4)
        msg = StepRequest(k=0, columns=(RequestColumn(
            x_c=(1 << 40, 1), y=(1, 1), r=(1, 1)),))
        with pytest.raises(ProtocolError, match="wider"):
            codec.encode(msg)

    def test_setup_grid_shape_enforced(self):
        bad = SessionSetup(public_key=PK_1024, v_grid=((1, 2, 3),) * 2,
                           z_grid=((1,) * 6,) * 2, delta=1e-4, n_d=1)
        with pytest.raises(ProtocolError, match="2x6"):
            Codec().encode(bad)


class TestSocketHelpers:
    def test_read_frame_roundtrip(self):
        left, right = socket.socketpair()
        try:
            frame = Codec().encode(HaltNotice(k=42))
            left.sendall(frame)
            assert protocol.read_frame(right) == frame
        finally:
            left.close()
            right.close()

    def test_read_frame_rejects_undersized_length(self):
        left, right = socket.socketpair()
        try:
            left.sendall(struct.pack(">I", 3) + b"\x00\x00\x00")
            with pytest.raises(ProtocolError, match="below fixed header"):
                protocol.read_frame(right)
        finally:
            left.close()
            right.close()

    def test_recv_exact_detects_early_close(self):
        left, right = socket.socketpair()
        left.sendall(b"\x00\x00")
        left.close()
        try:
            with pytest.raises(TransportError, match="closed mid-frame"):
                protocol.recv_exact(right, 4)
        finally:
            right.close()


class TestTcpTransport:
    def test_connection_refused(self):
        with pytest.raises(TransportError, match="cannot connect"):
            TcpTransport("127.0.0.1", 1, timeout=2.0)

    def test_session_against_minimal_server(self):
        pk = PublicKey((1 << 127) + 29)
        server_sock = socket.create_server(("127.0.0.1", 0))
        port = server_sock.getsockname()[1]
        errors = []

        def serve_once():
            try:
                conn, _ = server_sock.accept()
                with conn:
                    codec = Codec()
                    setup = codec.decode(protocol.read_frame(conn))
                    codec.bind(setup.public_key)
                    request = codec.decode(protocol.read_frame(conn))
                    response = StepResponse(k=request.k, columns=tuple(
                        ResponseColumn(u=col.x_c, x_c_plus=col.y)
                        for col in request.columns))
                    protocol.write_frame(conn, codec.encode(response))
                    halt = codec.decode(protocol.read_frame(conn))
                    assert isinstance(halt, HaltNotice) and halt.k == 5
            except Exception as exc:  # surface thread failures in the test
                errors.append(exc)

        thread = threading.Thread(target=serve_once)
        thread.start()
        try:
            transport = TcpTransport("127.0.0.1", port, timeout=5.0)
            transport.setup(make_setup(pk))
            request = random_request(random.Random(8), pk, 2, k=5)
            response = transport.exchange(request)
            assert response.k == 5
            assert [col.u for col in response.columns] == [col.x_c for col in request.columns]
            transport.halt(5)
            transport.close()
        finally:
            thread.join(timeout=5.0)
            server_sock.close()
        assert errors == []


class TestLoopbackTransport:
    def test_full_codec_path_and_timing(self):
        pk = PublicKey((1 << 127) + 29)
        seen = {}

        def on_setup(msg):
            seen["setup"] = msg

        def on_request(msg):
            return StepResponse(k=msg.k, columns=tuple(
                ResponseColumn(u=col.r, x_c_plus=col.x_c) for col in msg.columns))

        def on_halt(msg):
            seen["halt"] = msg

        transport = LoopbackTransport(on_setup, on_request, on_halt)
        setup = make_setup(pk, n_d=2)
        transport.setup(setup)
        assert seen["setup"] == setup

        request = random_request(random.Random(9), pk, 3, k=4)
        response = transport.exchange(request)
        assert response.k == 4
        assert [col.u for col in response.columns] == [col.r for col in request.columns]
        assert transport.last_eval_seconds is not None
        assert transport.last_eval_seconds >= 0.0

        transport.halt(4)
        assert seen["halt"] == HaltNotice(k=4)

    def test_mismatched_step_index_rejected(self):
        pk = PublicKey((1 << 127) + 29)
        transport = LoopbackTransport(
            lambda msg: None,
            lambda msg: StepResponse(k=msg.k + 1, columns=tuple(
                ResponseColumn(u=col.x_c, x_c_plus=col.y) for col in msg.columns)),
        )
        transport.setup(make_setup(pk))
        with pytest.raises(ProtocolError, match="expected"):
            transport.exchange(random_request(random.Random(10), pk, 1, k=0))
