"""Transports and transcript recording for the three-party protocol.

A Router owns the six directed links between Coordinator, ProviderA and
ProviderB.  Parties hand it serialized frames addressed by role; every
frame passes through the recorder, which is what the leakage audit
inspects.  Two link flavors exist: in-process (plain buffers, used by
tests and the default pipeline) and TCP sockets (demo of a real
deployment shape).
"""

from __future__ import annotations

import queue
import socket
import threading
from dataclasses import dataclass, field

from .messages import Frame, ProtocolError

ROLES = ("C", "A", "B")


@dataclass(frozen=True)
class TranscriptEntry:
    src: str
    dst: str
    frame_bytes: bytes

    @property
    def frame(self) -> Frame:
        return Frame.from_bytes(self.frame_bytes)


@dataclass
class TranscriptRecorder:
    """Append-only log of every frame crossing any link."""

    entries: list[TranscriptEntry] = field(default_factory=list)

    def record(self, src: str, dst: str, frame_bytes: bytes) -> None:
        self.entries.append(TranscriptEntry(src, dst, frame_bytes))

    def payloads(self):
        return [e.frame.payload for e in self.entries]


class InProcessRouter:
    """In-memory message routing over blocking queues, one per direction.

    Each directed link carries a strictly increasing sequence number;
    frames are serialized on send and re-parsed on receive, so nothing
    bypasses the wire format.  Parties may run in separate threads; recv
    blocks until a frame arrives or the timeout expires.
    """

    def __init__(self, recorder: TranscriptRecorder | None = None, timeout: float = 120.0):
        self.recorder = recorder or TranscriptRecorder()
        self.timeout = timeout
        self._queues: dict[tuple[str, str], queue.Queue] = {
            (s, d): queue.Queue() for s in ROLES for d in ROLES if s != d}
        self._next_seq: dict[tuple[str, str], int] = {k: 0 for k in self._queues}
        self._seen_seq: dict[tuple[str, str], int] = {k: -1 for k in self._queues}
        self._lock = threading.Lock()

    def send(self, src: str, dst: str, frame: Frame) -> None:
        key = (src, dst)
        with self._lock:
            expected = self._next_seq[key]
            if frame.seq != expected:
                raise ProtocolError(f"bad sequence number {frame.seq}, expected {expected}")
            self._next_seq[key] = expected + 1
            raw = frame.to_bytes()
            self.recorder.record(src, dst, raw)
        self._queues[key].put(raw)

    def recv(self, src: str, dst: str) -> Frame:
        key = (src, dst)
        try:
            raw = self._queues[key].get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(f"timeout waiting on link {src}->{dst}") from None
        frame = Frame.from_bytes(raw)
        if frame.seq != self._seen_seq[key] + 1:
            raise ProtocolError("sequence gap on receive")
        self._seen_seq[key] = frame.seq
        return frame

    def next_seq(self, src: str, dst: str) -> int:
        with self._lock:
            return self._next_seq[(src, dst)]


def send_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(frame.to_bytes())


def recv_frame(sock: socket.socket) -> Frame:
    header = _recv_exact(sock, 4)
    n = int.from_bytes(header, "big")
    return Frame.from_bytes(header + _recv_exact(sock, n))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class TcpRouter:
    """Frame routing over established TCP sockets.

    `socks` maps (src, dst) to a connected socket used for that direction;
    both directions may share one socket.  Sequence numbers are checked
    exactly as in the in-process router.  Intended for the demo scripts;
    channel security (TLS) is out of scope and assumed provided by the
    deployment.
    """

    def __init__(self, socks: dict[tuple[str, str], socket.socket],
                 recorder: TranscriptRecorder | None = None):
        self.recorder = recorder or TranscriptRecorder()
        self._socks = socks
        self._next_seq = {k: 0 for k in socks}
        self._seen_seq = {k: -1 for k in socks}

    def send(self, src: str, dst: str, frame: Frame) -> None:
        key = (src, dst)
        if frame.seq != self._next_seq[key]:
            raise ProtocolError("bad sequence number")
        self._next_seq[key] += 1
        self.recorder.record(src, dst, frame.to_bytes())
        send_frame(self._socks[key], frame)

    def recv(self, src: str, dst: str) -> Frame:
        key = (src, dst)
        frame = recv_frame(self._socks[key])
        if frame.seq != self._seen_seq[key] + 1:
            raise ProtocolError("sequence gap on receive")
        self._seen_seq[key] = frame.seq
        return frame

    def next_seq(self, src: str, dst: str) -> int:
        return self._next_seq[(src, dst)]
