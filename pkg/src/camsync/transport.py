"""UDP wire protocol for the offset handshake.

Layout (little-endian)::

    magic   4s  b"SSYN"
    version B   0x01
    kind    B   0x01 SyncProbe | 0x02 SyncReply
    payload     SyncProbe: t0            (int64)
                SyncReply: t0, t1, t2    (int64 x 3)

A probe is 14 bytes, a reply 30. The initiator stamps t0 on send and t3 on
receipt of the reply; the responder stamps t1 on receipt and t2 just before
sending. Over sockets the client initiates and the leader responds.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .clocksync import NtpSample, TransportTimeout
from .timebase import LEADER, Timestamp

log = logging.getLogger(__name__)

MAGIC = b"SSYN"
VERSION = 0x01
SYNC_PROBE = 0x01
SYNC_REPLY = 0x02

_HEADER = struct.Struct("<4sBB")
_PROBE = struct.Struct("<4sBBq")
_REPLY = struct.Struct("<4sBBqqq")


class ProtocolError(ValueError):
    pass


class TruncatedMessage(ProtocolError):
    pass


class BadMagic(ProtocolError):
    pass


class UnknownVersion(ProtocolError):
    pass


class UnknownKind(ProtocolError):
    pass


@dataclass(frozen=True)
class SyncProbe:
    t0: int


@dataclass(frozen=True)
class SyncReply:
    t0: int
    t1: int
    t2: int


def encode(msg) -> bytes:
    if isinstance(msg, SyncProbe):
        return _PROBE.pack(MAGIC, VERSION, SYNC_PROBE, msg.t0)
    if isinstance(msg, SyncReply):
        return _REPLY.pack(MAGIC, VERSION, SYNC_REPLY, msg.t0, msg.t1, msg.t2)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode(buf: bytes) -> SyncProbe | SyncReply:
    if len(buf) < _HEADER.size:
        raise TruncatedMessage(f"{len(buf)} bytes is shorter than the header")
    magic, version, kind = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnknownVersion(f"unsupported version {version}")
    if kind == SYNC_PROBE:
        layout = _PROBE
    elif kind == SYNC_REPLY:
        layout = _REPLY
    else:
        raise UnknownKind(f"unknown message kind {kind:#04x}")
    if len(buf) < layout.size:
        raise TruncatedMessage(f"{len(buf)} bytes, kind {kind} needs {layout.size}")
    if len(buf) > layout.size:
        raise ProtocolError(f"{len(buf) - layout.size} trailing bytes")
    fields = layout.unpack(buf)[3:]
    return SyncProbe(*fields) if kind == SYNC_PROBE else SyncReply(*fields)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host or "0.0.0.0", int(port)


def offset_clock(offset_ns: int = 0) -> Callable[[], int]:
    """Monotonic nanosecond clock shifted by ``offset_ns`` (to emulate another device)."""
    return lambda: time.monotonic_ns() + offset_ns


class LeaderServer:
    """Answers SyncProbes with SyncReplies on a UDP socket.

    Single-threaded over datagrams. Each reply depends only on the probe
    and the local clock, so any number of clients can share one leader.
    """

    def __init__(self, bind_address: tuple[str, int], clock: Callable[[], int] | None = None):
        self.clock = clock or time.monotonic_ns
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self.sock.bind(bind_address)
        except OSError:
            self.sock.close()
            raise
        self.sock.settimeout(0.1)
        self.answered = 0
        self.discarded = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def handle_one(self) -> bool:
        try:
            buf, peer = self.sock.recvfrom(64)
        except socket.timeout:
            return False
        t1 = self.clock()
        try:
            msg = decode(buf)
        except ProtocolError as exc:
            self.discarded += 1
            log.debug("dropping datagram from %s: %s", peer, exc)
            return False
        if not isinstance(msg, SyncProbe):
            self.discarded += 1
            return False
        t2 = self.clock()
        self.sock.sendto(encode(SyncReply(msg.t0, t1, t2)), peer)
        self.answered += 1
        return True

    def serve_forever(self) -> None:
        while not self._stop.is_set():
            try:
                self.handle_one()
            except OSError:
                if self._stop.is_set():
                    break
                raise

    def start(self) -> "LeaderServer":
        self._thread = threading.Thread(target=self.serve_forever, name="camsync-leader", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def leader_serve(bind_address, clock: Callable[[], int] | None = None) -> LeaderServer:
    """Bind and start a leader in a background thread; returns the session handle."""
    if isinstance(bind_address, str):
        bind_address = parse_address(bind_address)
    return LeaderServer(bind_address, clock).start()


class UdpClientTransport:
    """Client-initiated handshakes against a :class:`LeaderServer`.

    Samples carry ``initiator="client"``, so :func:`estimate_offset_delay`
    still yields the client-minus-leader offset.
    """

    def __init__(self, leader_address, clock: Callable[[], int] | None = None, timeout: float = 1.0,
                 client_domain: str = "client-1"):
        if isinstance(leader_address, str):
            leader_address = parse_address(leader_address)
        self.leader_address = leader_address
        self.clock = clock or time.monotonic_ns
        self.timeout = timeout
        self.client_domain = client_domain
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.settimeout(timeout)
        self.discarded = 0

    def exchange(self) -> NtpSample:
        t0 = self.clock()
        self.sock.sendto(encode(SyncProbe(t0)), self.leader_address)
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportTimeout(f"no reply from {self.leader_address} within {self.timeout}s")
            self.sock.settimeout(remaining)
            try:
                buf, _ = self.sock.recvfrom(64)
            except socket.timeout:
                raise TransportTimeout(f"no reply from {self.leader_address} within {self.timeout}s") from None
            except ConnectionRefusedError:
                raise TransportTimeout(f"{self.leader_address} refused the probe") from None
            t3 = self.clock()
            try:
                msg = decode(buf)
            except ProtocolError:
                self.discarded += 1
                continue
            # stale replies to earlier, timed-out probes carry a different t0
            if not isinstance(msg, SyncReply) or msg.t0 != t0:
                self.discarded += 1
                continue
            return NtpSample(
                t0=Timestamp(t0, self.client_domain),
                t1=Timestamp(msg.t1, LEADER),
                t2=Timestamp(msg.t2, LEADER),
                t3=Timestamp(t3, self.client_domain),
                initiator="client",
            )

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def client_exchange(leader_address, clock: Callable[[], int] | None = None, timeout: float = 1.0,
                    retries: int = 3) -> NtpSample:
    """One handshake, retried up to ``retries`` times on timeout."""
    with UdpClientTransport(leader_address, clock, timeout) as tr:
        for attempt in range(retries + 1):
            try:
                return tr.exchange()
            except TransportTimeout:
                if attempt == retries:
                    raise
    raise AssertionError("unreachable")
