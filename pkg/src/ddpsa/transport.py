"""Message delivery between roles.

Two interchangeable transports speak one frame format:

    length (4 bytes, big-endian, payload size only) | msg_type (1 byte) | payload

The simulated transport is a deterministic in-process mailbox router with
eavesdrop taps and drop rules for the fault-injection and leakage tests.
The TCP transport runs a listener per endpoint on localhost and delivers
frames over real sockets. Both produce byte-identical frames because both
go through encode_frame.
"""
from __future__ import annotations

import logging
import socket
import struct
import threading
import queue
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

from .errors import (
    FrameError,
    ReceiveTimeoutError,
    TransportError,
    UnsupportedOperationError,
)
from .field import DEFAULT_MODULUS, PrimeModulus
from .messages import RoundMessage, decode_payload

log = logging.getLogger("ddpsa.transport")

FRAME_HEADER = struct.Struct(">IB")
MAX_PAYLOAD = 2**32 - 1

VALID_MSG_TYPES = frozenset({1, 2, 3, 4, 5})


class Endpoint(NamedTuple):
    """Addressable party: kind is one of client, server, ps."""

    kind: str
    index: int


def client_endpoint(i: int) -> Endpoint:
    return Endpoint("client", i)


def server_endpoint(j: int) -> Endpoint:
    return Endpoint("server", j)


PS_ENDPOINT = Endpoint("ps", 0)


def encode_frame(msg: RoundMessage) -> bytes:
    payload = msg.payload()
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds frame limit")
    return FRAME_HEADER.pack(len(payload), msg.msg_type) + payload


def decode_frame(data: bytes, modulus: PrimeModulus = DEFAULT_MODULUS) -> RoundMessage:
    """Decode a buffer holding exactly one frame."""
    if len(data) < FRAME_HEADER.size:
        raise FrameError(f"frame of {len(data)} bytes is shorter than the header")
    length, msg_type = FRAME_HEADER.unpack_from(data)
    if msg_type not in VALID_MSG_TYPES:
        raise FrameError(f"unknown message type {msg_type}")
    payload = data[FRAME_HEADER.size :]
    if len(payload) != length:
        raise FrameError(f"length field says {length} but payload has {len(payload)} bytes")
    return decode_payload(msg_type, payload, modulus)


# --------------------------------------------------------------- simulated

DropRule = Callable[[Endpoint, Endpoint, RoundMessage], bool]


@dataclass
class Tap:
    """Eavesdropper's view of one directed link: every frame that crossed it."""

    src: Endpoint
    dst: Endpoint
    frames: list

    def messages(self, modulus: PrimeModulus = DEFAULT_MODULUS) -> list:
        return [decode_frame(f, modulus) for f in self.frames]


class SimTransport:
    """Deterministic mailbox router.

    Frames are queued per destination in send order. An empty mailbox on
    receive raises the timeout error immediately: simulated time has no
    clock to wait on, and a message that was never sent never will be.
    """

    def __init__(self, modulus: PrimeModulus = DEFAULT_MODULUS):
        self.modulus = modulus
        self._mailboxes: dict[Endpoint, deque] = defaultdict(deque)
        self._taps: dict[tuple[Endpoint, Endpoint], Tap] = {}
        self._drop_rules: list[DropRule] = []
        self.delivered: list[tuple[Endpoint, Endpoint, RoundMessage]] = []

    def eavesdrop_tap(self, src: Endpoint, dst: Endpoint) -> Tap:
        key = (src, dst)
        if key not in self._taps:
            self._taps[key] = Tap(src=src, dst=dst, frames=[])
        return self._taps[key]

    def add_drop_rule(self, rule: DropRule) -> None:
        self._drop_rules.append(rule)

    def drop_link(self, src: Endpoint, dst: Endpoint, msg_type: Optional[int] = None) -> None:
        """Silently discard traffic from src to dst (optionally one type only)."""

        def rule(s: Endpoint, d: Endpoint, m: RoundMessage) -> bool:
            return s == src and d == dst and (msg_type is None or m.msg_type == msg_type)

        self.add_drop_rule(rule)

    def clear_drop_rules(self) -> None:
        self._drop_rules.clear()

    def send(self, src: Endpoint, dst: Endpoint, msg: RoundMessage) -> None:
        frame = encode_frame(msg)
        tap = self._taps.get((src, dst))
        if tap is not None:
            tap.frames.append(frame)
        if any(rule(src, dst, msg) for rule in self._drop_rules):
            log.debug("dropped %s from %s to %s", type(msg).__name__, src, dst)
            return
        self._mailboxes[dst].append(frame)
        self.delivered.append((src, dst, msg))

    def receive(self, dst: Endpoint, timeout: Optional[float] = None) -> RoundMessage:
        box = self._mailboxes[dst]
        if not box:
            raise ReceiveTimeoutError(f"no message waiting for {dst}")
        return decode_frame(box.popleft(), self.modulus)

    def pending(self, dst: Endpoint) -> int:
        return len(self._mailboxes[dst])

    def close(self) -> None:
        self._mailboxes.clear()


# --------------------------------------------------------------------- tcp


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


class TcpTransport:
    """Loopback TCP mesh: one listener per endpoint, frames over real sockets.

    Outbound connections are opened lazily per (src, dst) pair and reused,
    which gives FIFO delivery per link. Each endpoint's reader threads feed
    a single inbox queue, so receive() sees frames in arrival order.
    """

    def __init__(
        self,
        endpoints: list[Endpoint],
        modulus: PrimeModulus = DEFAULT_MODULUS,
        timeout: float = 30.0,
        host: str = "127.0.0.1",
    ):
        self.modulus = modulus
        self.timeout = timeout
        self._closed = False
        self._lock = threading.Lock()
        self._listeners: dict[Endpoint, socket.socket] = {}
        self._addresses: dict[Endpoint, tuple[str, int]] = {}
        self._inboxes: dict[Endpoint, queue.Queue] = {}
        self._outbound: dict[tuple[Endpoint, Endpoint], socket.socket] = {}
        self._conns: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        for ep in endpoints:
            if ep in self._listeners:
                raise TransportError(f"duplicate endpoint {ep}")
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host, 0))
            listener.listen()
            self._listeners[ep] = listener
            self._addresses[ep] = listener.getsockname()
            self._inboxes[ep] = queue.Queue()
            t = threading.Thread(target=self._accept_loop, args=(ep, listener), daemon=True)
            t.start()
            self._threads.append(t)

    def address_of(self, ep: Endpoint) -> tuple[str, int]:
        return self._addresses[ep]

    def _accept_loop(self, ep: Endpoint, listener: socket.socket) -> None:
        while not self._closed:
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            with self._lock:
                self._conns.append(conn)
            t = threading.Thread(target=self._reader_loop, args=(ep, conn), daemon=True)
            t.start()
            self._threads.append(t)

    def _reader_loop(self, ep: Endpoint, conn: socket.socket) -> None:
        try:
            while not self._closed:
                header = _recv_exact(conn, FRAME_HEADER.size)
                length, msg_type = FRAME_HEADER.unpack(header)
                payload = _recv_exact(conn, length)
                msg = decode_payload(msg_type, payload, self.modulus)
                self._inboxes[ep].put(msg)
        except (ConnectionError, OSError):
            return
        except FrameError as exc:
            log.warning("dropping connection to %s: %s", ep, exc)
            conn.close()

    def send(self, src: Endpoint, dst: Endpoint, msg: RoundMessage) -> None:
        if self._closed:
            raise TransportError("transport is closed")
        if dst not in self._addresses:
            raise TransportError(f"unknown endpoint {dst}")
        frame = encode_frame(msg)
        key = (src, dst)
        with self._lock:
            sock = self._outbound.get(key)
            if sock is None:
                sock = socket.create_connection(self._addresses[dst], timeout=self.timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._outbound[key] = sock
        try:
            sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send from {src} to {dst} failed: {exc}") from exc

    def receive(self, dst: Endpoint, timeout: Optional[float] = None) -> RoundMessage:
        if dst not in self._inboxes:
            raise TransportError(f"unknown endpoint {dst}")
        wait = self.timeout if timeout is None else timeout
        try:
            return self._inboxes[dst].get(timeout=wait)
        except queue.Empty:
            raise ReceiveTimeoutError(f"no frame for {dst} within {wait}s") from None

    def eavesdrop_tap(self, src: Endpoint, dst: Endpoint) -> Tap:
        raise UnsupportedOperationError(
            "eavesdrop taps exist only on the simulated transport"
        )

    def close(self) -> None:
        self._closed = True
        with self._lock:
            socks = list(self._listeners.values()) + list(self._outbound.values()) + self._conns
            self._outbound.clear()
            self._conns.clear()
        for sock in socks:
            try:
                sock.close()
            except OSError:
                pass

    def __enter__(self) -> "TcpTransport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
