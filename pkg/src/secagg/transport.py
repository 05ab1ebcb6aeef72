"""Framed message transport: in-process queues and TCP.

Frame layout, identical on every transport:

    length   4 bytes, big-endian, = 5 + len(body)
    msg_type 1 byte, registered in MsgType
    round_id 4 bytes, big-endian
    body     opaque

The canonical empty frame (type QUERY, round 0) is the 9 bytes
00 00 00 05 01 00 00 00 00. Frames above 16 MiB are refused on both
sides. Byte counts in ChannelStats are frame bytes, so INPROC and TCP
report identical numbers for identical protocol runs.
"""

from __future__ import annotations

import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, NamedTuple

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import AuthenticationFailure, FrameTooLarge, Truncated, UnknownMsgType

MAX_FRAME = 16 * 1024 * 1024  # max value of the length field
_PREFIX = 5  # msg_type + round_id


class MsgType(IntEnum):
    QUERY = 1
    ENC_QUERY = 2
    SUBRESULT = 3
    ENC_AGGREGATE = 4
    PARTIAL_DEC = 5
    FINAL_RESULT = 6
    OT_ANNOUNCE = 7
    OT_RESPONSE = 8
    OT_PAYLOADS = 9
    ATTEST_REQ = 10
    ATTEST_REPORT = 11
    # session plumbing, never part of a round
    HELLO = 12
    SETUP = 13
    SHUTDOWN = 14


class Frame(NamedTuple):
    msg_type: MsgType
    round_id: int
    body: bytes

    @property
    def wire_size(self) -> int:
        return 4 + _PREFIX + len(self.body)


def encode_frame(msg_type: int, round_id: int, body: bytes = b"") -> bytes:
    msg_type = MsgType(msg_type)  # raises ValueError on unregistered types
    length = _PREFIX + len(body)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"frame length {length} exceeds {MAX_FRAME}")
    return struct.pack(">IB I", length, int(msg_type), round_id) + body


def decode_frame(read: Callable[[int], bytes]) -> Frame:
    """Decode one frame from a read(n) callable that may return short
    reads; b'' means end of stream. Raises EOFError on a clean end
    before any byte, Truncated on a partial frame."""
    header = _read_exact(read, 4, allow_eof=True)
    if header is None:
        raise EOFError("stream closed")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME}")
    if length < _PREFIX:
        raise Truncated(f"declared length {length} below minimum {_PREFIX}")
    rest = _read_exact(read, length)
    msg_type_raw = rest[0]
    if msg_type_raw not in MsgType._value2member_map_:
        raise UnknownMsgType(f"message type {msg_type_raw} not registered")
    (round_id,) = struct.unpack(">I", rest[1:5])
    return Frame(MsgType(msg_type_raw), round_id, rest[5:])


def decode_frame_bytes(data: bytes) -> Frame:
    """Decode a frame held fully in memory; must consume every byte."""
    pos = 0

    def read(n):
        nonlocal pos
        chunk = data[pos:pos + n]
        pos += len(chunk)
        return chunk

    frame = decode_frame(read)
    if pos != len(data):
        raise Truncated(f"{len(data) - pos} trailing bytes after frame")
    return frame


def _read_exact(read, n, allow_eof=False):
    buf = b""
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            if allow_eof and not buf:
                return None
            raise Truncated(f"stream ended with {len(buf)} of {n} bytes")
        buf += chunk
    return buf


@dataclass
class ChannelStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    messages_sent: int = 0
    messages_received: int = 0
    wall_time_blocked: float = 0.0


class Channel:
    """Base: framing, stats, optional capture of frames for audits."""

    def __init__(self):
        self.stats = ChannelStats()
        self.capture: list | None = None

    def send(self, msg_type: int, round_id: int, body: bytes = b"") -> None:
        frame_bytes = encode_frame(msg_type, round_id, body)
        self._send_bytes(frame_bytes)
        self.stats.bytes_sent += len(frame_bytes)
        self.stats.messages_sent += 1
        if self.capture is not None:
            self.capture.append(("sent", Frame(MsgType(msg_type), round_id, body)))

    def recv(self, timeout: float | None = None) -> Frame:
        t0 = time.perf_counter()
        try:
            frame_bytes = self._recv_bytes(timeout)
        finally:
            self.stats.wall_time_blocked += time.perf_counter() - t0
        frame = decode_frame_bytes(frame_bytes)
        self.stats.bytes_received += len(frame_bytes)
        self.stats.messages_received += 1
        if self.capture is not None:
            self.capture.append(("recv", frame))
        return frame

    def _send_bytes(self, data: bytes) -> None:
        raise NotImplementedError

    def _recv_bytes(self, timeout: float | None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class InprocChannel(Channel):
    """One end of an in-process queue pair. Transfers encoded frames so
    byte accounting matches TCP exactly."""

    def __init__(self, rx: queue.Queue, tx: queue.Queue):
        super().__init__()
        self._rx = rx
        self._tx = tx
        self._closed = False

    def _send_bytes(self, data: bytes) -> None:
        if self._closed:
            raise OSError("channel closed")
        self._tx.put(data)

    def _recv_bytes(self, timeout: float | None) -> bytes:
        try:
            data = self._rx.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("recv timed out") from None
        if data is None:
            self._rx.put(None)  # keep EOF visible to later reads
            raise EOFError("peer closed")
        return data

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._tx.put(None)


def inproc_pair() -> tuple[InprocChannel, InprocChannel]:
    a2b: queue.Queue = queue.Queue()
    b2a: queue.Queue = queue.Queue()
    return InprocChannel(rx=b2a, tx=a2b), InprocChannel(rx=a2b, tx=b2a)


class TcpChannel(Channel):
    def __init__(self, sock: socket.socket):
        super().__init__()
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._lock = threading.Lock()  # sendall from multiple threads

    def _send_bytes(self, data: bytes) -> None:
        with self._lock:
            self._sock.sendall(data)

    def _read_exact(self, n: int, mid_frame: bool) -> bytes | None:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except socket.timeout:
                if buf or mid_frame:
                    # A timeout with sync lost is not recoverable.
                    raise Truncated("timed out inside a frame") from None
                raise TimeoutError("recv timed out") from None
            except OSError:
                chunk = b""
            if not chunk:
                if buf or mid_frame:
                    raise Truncated(f"stream ended with {len(buf)} of {n} bytes")
                return None
            buf += chunk
        return buf

    def _recv_bytes(self, timeout: float | None) -> bytes:
        self._sock.settimeout(timeout)
        header = self._read_exact(4, mid_frame=False)
        if header is None:
            raise EOFError("peer closed")
        (length,) = struct.unpack(">I", header)
        if length > MAX_FRAME:
            raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME}")
        return header + self._read_exact(length, mid_frame=True)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(256)
    return srv


def tcp_accept(listener: socket.socket) -> TcpChannel:
    sock, _ = listener.accept()
    return TcpChannel(sock)


def tcp_connect(host: str, port: int, timeout: float = 10.0) -> TcpChannel:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return TcpChannel(sock)


def channel_pair(kind: str = "inproc") -> tuple[Channel, Channel]:
    """A connected pair on the chosen transport; TCP uses loopback."""
    if kind == "inproc":
        return inproc_pair()
    if kind == "tcp":
        srv = tcp_listen()
        host, port = srv.getsockname()
        client = tcp_connect(host, port)
        server = tcp_accept(srv)
        srv.close()
        return client, server
    raise ValueError(f"unknown transport {kind!r}")


class SecureChannel(Channel):
    """Optional AEAD wrapper over any channel: bodies are encrypted and
    bound to (msg_type, round_id); the frame header stays in clear so
    framing is unchanged. Off by default in the protocol engine."""

    def __init__(self, inner: Channel, key: bytes):
        super().__init__()
        self._inner = inner
        self._aead = ChaCha20Poly1305(key)
        self.stats = inner.stats  # wire truth lives below

    def send(self, msg_type: int, round_id: int, body: bytes = b"") -> None:
        nonce = os.urandom(12)
        ad = struct.pack(">BI", int(msg_type), round_id)
        sealed = nonce + self._aead.encrypt(nonce, body, ad)
        self._inner.send(msg_type, round_id, sealed)
        if self.capture is not None:
            self.capture.append(("sent", Frame(MsgType(msg_type), round_id, body)))

    def recv(self, timeout: float | None = None) -> Frame:
        frame = self._inner.recv(timeout)
        ad = struct.pack(">BI", int(frame.msg_type), frame.round_id)
        try:
            body = self._aead.decrypt(frame.body[:12], frame.body[12:], ad)
        except (InvalidTag, IndexError):
            raise AuthenticationFailure("channel body failed authentication") \
                from None
        out = Frame(frame.msg_type, frame.round_id, body)
        if self.capture is not None:
            self.capture.append(("recv", out))
        return out

    def close(self) -> None:
        self._inner.close()
