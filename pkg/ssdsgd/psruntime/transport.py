from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from subtypes import Enum

from ..errors import ProtocolError, TransportTimeout
from ..mixin import ReprMixin
from .message import LENGTH_PREFIX, Message, MessageKind, frame, unframe
from .server import ParamShard

logger = logging.getLogger(__name__)


class TransportKind(Enum):
    INPROC = "inproc"
    SOCKET = "socket"


class Stage(Enum):
    INIT = "init"
    WARMUP = "warmup"
    DELAY = "delay"
    ASYNC = "async"


@dataclass(frozen=True)
class LogEntry:
    kind: MessageKind
    key: int
    worker_id: int
    iteration: int
    stage: Stage


class MessageLog:
    """Every message that crossed the transport, tagged with the training stage of its sender."""

    def __init__(self) -> None:
        self.entries: list[LogEntry] = []
        self._lock = threading.Lock()

    def record(self, msg: Message, stage: Stage) -> None:
        with self._lock:
            self.entries.append(LogEntry(kind=msg.kind, key=msg.key, worker_id=msg.worker_id, iteration=msg.iteration, stage=stage))

    def count(self, kind: MessageKind, worker_id: int = None, key: int = None, stage: Stage = None) -> int:
        return sum(
            1 for entry in self.entries
            if entry.kind == kind
            and (worker_id is None or entry.worker_id == worker_id)
            and (key is None or entry.key == key)
            and (stage is None or entry.stage == stage)
        )

    def tally(self, kind: MessageKind, stage: Stage = None) -> Counter:
        """(worker_id, key) -> number of messages of this kind."""
        return Counter((entry.worker_id, entry.key) for entry in self.entries if entry.kind == kind and (stage is None or entry.stage == stage))


class Transport(ReprMixin):
    """
    Carries messages between workers and server shards. Replies land in per-worker mailboxes; PushAcks are only counted.

    Per-message cost is latency + bytes / bandwidth. In real-clock mode the sender sleeps for it; otherwise it is added to a logical clock.
    """

    def __init__(self, shards: dict[int, ParamShard], num_workers: int, latency: float = 0.0, bandwidth: float = float("inf"), real_clock: bool = False) -> None:
        self.shards, self.latency, self.bandwidth, self.real_clock = shards, latency, bandwidth, real_clock
        self.log = MessageLog()
        self.logical_time = 0.0
        self.acks: Counter = Counter()
        self._mailboxes = {worker_id: queue.Queue() for worker_id in range(num_workers)}
        self._clock_lock = threading.Lock()

    def send(self, msg: Message, stage: Stage) -> None:
        if msg.key not in self.shards:
            raise ProtocolError(f"no shard holds key {msg.key}")

        self.log.record(msg, stage)
        self._charge(msg)
        for reply in self._deliver(msg):
            self.log.record(reply, stage)
            self._charge(reply)
            if reply.kind == MessageKind.PUSH_ACK:
                self.acks[reply.worker_id] += 1
            else:
                self._mailboxes[reply.worker_id].put(reply)

    def receive(self, worker_id: int, timeout: Optional[float] = None) -> Message:
        """Next reply for a worker. Without a timeout the reply must already be waiting."""
        try:
            if timeout is None:
                return self._mailboxes[worker_id].get_nowait()
            return self._mailboxes[worker_id].get(timeout=timeout)
        except queue.Empty:
            if timeout is None:
                raise ProtocolError(f"worker {worker_id} expected a reply but its mailbox is empty") from None
            raise TransportTimeout(f"no reply for worker {worker_id} within {timeout}s") from None

    def close(self) -> None:
        pass

    def _deliver(self, msg: Message) -> list[Message]:
        return self.shards[msg.key].handle(msg)

    def _charge(self, msg: Message) -> None:
        cost = self.latency + (msg.nbytes / self.bandwidth if self.bandwidth else 0.0)
        if not cost:
            return
        if self.real_clock:
            time.sleep(cost)
        else:
            with self._clock_lock:
                self.logical_time += cost


class InProcessTransport(Transport):
    """Hands Message objects to shards directly."""


class LoopbackSocketTransport(Transport):
    """
    Sends every message and every reply as a length-prefixed frame over a local socket pair before it is handled,
    so the wire codec sits on the path of every run that selects it.
    """

    def __init__(self, shards: dict[int, ParamShard], num_workers: int, latency: float = 0.0, bandwidth: float = float("inf"), real_clock: bool = False) -> None:
        super().__init__(shards=shards, num_workers=num_workers, latency=latency, bandwidth=bandwidth, real_clock=real_clock)
        self._worker_end, self._server_end = socket.socketpair()
        for end in (self._worker_end, self._server_end):
            end.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, 8 * 1024 * 1024)
            end.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 8 * 1024 * 1024)
        self._wire_lock = threading.Lock()

    def close(self) -> None:
        self._worker_end.close()
        self._server_end.close()

    def _deliver(self, msg: Message) -> list[Message]:
        with self._wire_lock:
            received = self._roundtrip(msg, self._worker_end, self._server_end)
            return [self._roundtrip(reply, self._server_end, self._worker_end) for reply in self.shards[received.key].handle(received)]

    @staticmethod
    def _roundtrip(msg: Message, sender: socket.socket, receiver: socket.socket) -> Message:
        sender.sendall(frame(msg))
        prefix = _read_exactly(receiver, LENGTH_PREFIX.size)
        (size,) = LENGTH_PREFIX.unpack(prefix)
        decoded, rest = unframe(prefix + _read_exactly(receiver, size))
        if rest:
            raise ProtocolError(f"{len(rest)} trailing bytes after frame")
        return decoded


def _read_exactly(sock: socket.socket, size: int) -> bytes:
    chunks, remaining = [], size
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProtocolError("socket closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def make_transport(kind: TransportKind, shards: dict[int, ParamShard], num_workers: int, latency: float = 0.0, bandwidth: float = float("inf"), real_clock: bool = False) -> Transport:
    return TransportKind(kind).map_to({
        TransportKind.INPROC: InProcessTransport,
        TransportKind.SOCKET: LoopbackSocketTransport,
    })(shards=shards, num_workers=num_workers, latency=latency, bandwidth=bandwidth, real_clock=real_clock)
