"""Frame codec and channel tests, covering INPROC and TCP the same way."""

import os
import socket
import struct
import threading

import pytest
from hypothesis import given, settings, strategies as st

from secagg.errors import (AuthenticationFailure, FrameTooLarge, Truncated,
                           UnknownMsgType)
from secagg.transport import (MAX_FRAME, Frame, MsgType, SecureChannel,
                              channel_pair, decode_frame, decode_frame_bytes,
                              encode_frame, inproc_pair, tcp_accept,
                              tcp_connect, tcp_listen)

GOLDEN_EMPTY = bytes.fromhex("000000050100000000")


def dribble_reader(data, chunk=1):
    """read(n) callable that returns at most `chunk` bytes at a time."""
    pos = 0

    def read(n):
        nonlocal pos
        take = data[pos:pos + min(n, chunk)]
        pos += len(take)
        return take

    return read


# --------------------------------------------------------------- codec


def test_golden_empty_frame():
    assert encode_frame(MsgType.QUERY, 0, b"") == GOLDEN_EMPTY
    frame = decode_frame_bytes(GOLDEN_EMPTY)
    assert frame == Frame(MsgType.QUERY, 0, b"")
    assert frame.wire_size == 9


def test_frame_layout():
    body = b"\xaa\xbb"
    blob = encode_frame(MsgType.SUBRESULT, 0x01020304, body)
    assert blob[:4] == struct.pack(">I", 5 + len(body))
    assert blob[4] == int(MsgType.SUBRESULT)
    assert blob[5:9] == struct.pack(">I", 0x01020304)
    assert blob[9:] == body


def test_decode_survives_short_reads():
    blob = encode_frame(MsgType.FINAL_RESULT, 7, bytes(range(64)))
    frame = decode_frame(dribble_reader(blob, chunk=1))
    assert frame == Frame(MsgType.FINAL_RESULT, 7, bytes(range(64)))


def test_encode_rejects_unregistered_type():
    with pytest.raises(ValueError):
        encode_frame(200, 0, b"")


def test_encode_rejects_oversized_frame():
    encode_frame(MsgType.QUERY, 0, bytes(MAX_FRAME - 5))  # at the limit
    with pytest.raises(FrameTooLarge):
        encode_frame(MsgType.QUERY, 0, bytes(MAX_FRAME - 4))


def test_decode_rejects_oversized_declared_length():
    header = struct.pack(">I", MAX_FRAME + 1)
    with pytest.raises(FrameTooLarge):
        decode_frame(dribble_reader(header, chunk=4))


def test_decode_rejects_undersized_declared_length():
    header = struct.pack(">I", 4)
    with pytest.raises(Truncated):
        decode_frame(dribble_reader(header, chunk=4))


def test_decode_truncated_body():
    blob = encode_frame(MsgType.QUERY, 0, b"abcdef")
    with pytest.raises(Truncated):
        decode_frame(dribble_reader(blob[:-2]))


def test_decode_clean_eof():
    with pytest.raises(EOFError):
        decode_frame(dribble_reader(b""))


def test_decode_unknown_msg_type():
    blob = bytearray(GOLDEN_EMPTY)
    blob[4] = 0xFF
    with pytest.raises(UnknownMsgType):
        decode_frame_bytes(bytes(blob))


def test_decode_rejects_trailing_bytes():
    with pytest.raises(Truncated):
        decode_frame_bytes(GOLDEN_EMPTY + b"\x00")


@settings(max_examples=200, deadline=None)
@given(msg_type=st.sampled_from(sorted(MsgType)),
       round_id=st.integers(min_value=0, max_value=2 ** 32 - 1),
       body=st.binary(max_size=2048))
def test_codec_round_trip_property(msg_type, round_id, body):
    blob = encode_frame(msg_type, round_id, body)
    assert len(blob) == 9 + len(body)
    assert decode_frame_bytes(blob) == Frame(msg_type, round_id, body)


# ------------------------------------------------------------ channels


@pytest.fixture(params=["inproc", "tcp"])
def pair(request):
    a, b = channel_pair(request.param)
    yield a, b
    a.close()
    b.close()


def test_channel_round_trip(pair):
    a, b = pair
    a.send(MsgType.QUERY, 3, b"ping")
    frame = b.recv(timeout=5)
    assert frame == Frame(MsgType.QUERY, 3, b"ping")
    b.send(MsgType.FINAL_RESULT, 3, b"pong")
    assert a.recv(timeout=5) == Frame(MsgType.FINAL_RESULT, 3, b"pong")


def test_channel_preserves_order(pair):
    a, b = pair
    for i in range(200):
        a.send(MsgType.SUBRESULT, i, i.to_bytes(4, "little"))
    for i in range(200):
        frame = b.recv(timeout=5)
        assert frame.round_id == i
        assert frame.body == i.to_bytes(4, "little")


def test_channel_stats_track_frame_bytes(pair):
    a, b = pair
    a.send(MsgType.QUERY, 0, b"")
    b.recv(timeout=5)
    assert a.stats.bytes_sent == 9
    assert a.stats.messages_sent == 1
    assert b.stats.bytes_received == 9
    assert b.stats.messages_received == 1


def test_channel_timeout(pair):
    _, b = pair
    with pytest.raises(TimeoutError):
        b.recv(timeout=0.05)


def test_channel_eof_after_close(pair):
    a, b = pair
    a.send(MsgType.QUERY, 0, b"last")
    a.close()
    assert b.recv(timeout=5).body == b"last"
    with pytest.raises(EOFError):
        b.recv(timeout=5)
    # EOF must be sticky, not one-shot
    with pytest.raises(EOFError):
        b.recv(timeout=5)


def test_channel_large_frame(pair):
    a, b = pair
    body = os.urandom(1 << 20)
    a.send(MsgType.OT_PAYLOADS, 1, body)
    assert b.recv(timeout=10).body == body


def test_inproc_and_tcp_report_identical_stats():
    totals = []
    for kind in ("inproc", "tcp"):
        a, b = channel_pair(kind)
        try:
            for i in range(5):
                a.send(MsgType.QUERY, i, b"x" * (i * 7))
                b.recv(timeout=5)
            totals.append((a.stats.bytes_sent, b.stats.bytes_received,
                           a.stats.messages_sent))
        finally:
            a.close()
            b.close()
    assert totals[0] == totals[1]


def test_tcp_mid_frame_eof_is_truncation():
    srv = tcp_listen()
    host, port = srv.getsockname()
    client = tcp_connect(host, port)
    server = tcp_accept(srv)
    srv.close()
    try:
        blob = encode_frame(MsgType.QUERY, 0, b"abcdef")
        client._sock.sendall(blob[:6])
        client._sock.shutdown(socket.SHUT_WR)
        with pytest.raises(Truncated):
            server.recv(timeout=5)
    finally:
        client.close()
        server.close()


def test_tcp_mid_frame_timeout_is_truncation():
    srv = tcp_listen()
    host, port = srv.getsockname()
    client = tcp_connect(host, port)
    server = tcp_accept(srv)
    srv.close()
    try:
        blob = encode_frame(MsgType.QUERY, 0, b"abcdef")
        client._sock.sendall(blob[:6])
        with pytest.raises(Truncated):
            server.recv(timeout=0.2)
    finally:
        client.close()
        server.close()


def test_tcp_concurrent_senders_keep_frames_intact():
    a, b = channel_pair("tcp")
    try:
        def blast(tag):
            for i in range(50):
                a.send(MsgType.SUBRESULT, tag, bytes([tag]) * 100)

        threads = [threading.Thread(target=blast, args=(t,)) for t in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        for _ in range(200):
            frame = b.recv(timeout=5)
            assert frame.body == bytes([frame.round_id]) * 100
    finally:
        a.close()
        b.close()


# ------------------------------------------------------- secure wrapper


def test_secure_channel_round_trip():
    key = os.urandom(32)
    ia, ib = inproc_pair()
    a, b = SecureChannel(ia, key), SecureChannel(ib, key)
    a.send(MsgType.QUERY, 5, b"secret body")
    frame = b.recv(timeout=5)
    assert frame == Frame(MsgType.QUERY, 5, b"secret body")


def test_secure_channel_hides_body_on_wire():
    key = os.urandom(32)
    ia, ib = inproc_pair()
    a = SecureChannel(ia, key)
    a.send(MsgType.QUERY, 1, b"attack at dawn")
    raw = ib.recv(timeout=5)
    assert b"attack at dawn" not in raw.body
    assert len(raw.body) == 12 + len(b"attack at dawn") + 16


def test_secure_channel_rejects_tamper():
    key = os.urandom(32)
    ia, ib = inproc_pair()
    a, b = SecureChannel(ia, key), SecureChannel(ib, key)
    a.send(MsgType.QUERY, 1, b"payload")
    # flip one ciphertext bit in flight
    sealed = ib._rx.get(timeout=5)
    corrupted = sealed[:-1] + bytes([sealed[-1] ^ 1])
    ib._rx.put(corrupted)
    with pytest.raises(AuthenticationFailure):
        b.recv(timeout=5)


def test_secure_channel_binds_header():
    key = os.urandom(32)
    ia, ib = inproc_pair()
    a, b = SecureChannel(ia, key), SecureChannel(ib, key)
    a.send(MsgType.QUERY, 1, b"payload")
    raw = decode_frame_bytes(ib._rx.get(timeout=5))
    # replay the sealed body under a different round id
    ib._rx.put(encode_frame(raw.msg_type, 2, raw.body))
    with pytest.raises(AuthenticationFailure):
        b.recv(timeout=5)


def test_secure_channel_wrong_key():
    ia, ib = inproc_pair()
    a = SecureChannel(ia, os.urandom(32))
    b = SecureChannel(ib, os.urandom(32))
    a.send(MsgType.QUERY, 1, b"payload")
    with pytest.raises(AuthenticationFailure):
        b.recv(timeout=5)


def test_capture_hook_records_frames():
    a, b = inproc_pair()
    a.capture = []
    b.capture = []
    a.send(MsgType.QUERY, 1, b"one")
    b.recv(timeout=5)
    assert a.capture == [("sent", Frame(MsgType.QUERY, 1, b"one"))]
    assert b.capture == [("recv", Frame(MsgType.QUERY, 1, b"one"))]
