from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from subtypes import Enum

from ..errors import ProtocolError

# kind: u8, key: u32, worker_id: u16, iteration: u64, payload length (number of float64 values): u32
HEADER = struct.Struct("<BIHQI")
LENGTH_PREFIX = struct.Struct("<I")
MAX_FRAME_SIZE = 64 * 1024 * 1024


class MessageKind(Enum):
    PUSH = 1
    PUSH_ACK = 2
    PULL_REQ = 3
    PULL_RESP = 4


@dataclass(eq=False)
class Message:
    """
    One unit of the push/pull protocol. Push carries gradients and PullResp carries weights; PushAck and PullReq carry no payload.
    For Push the iteration is the worker's 1-based iteration; for PullReq and PullResp it is the weight version requested or served.
    """
    kind: MessageKind
    key: int
    worker_id: int
    iteration: int
    payload: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    def __post_init__(self) -> None:
        self.kind = MessageKind(self.kind)
        self.payload = np.ascontiguousarray(self.payload, dtype=np.float64)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind.name}, key={self.key}, worker_id={self.worker_id}, iteration={self.iteration}, payload=<{self.payload.shape[0]}>)"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Message):
            return NotImplemented
        return (self.kind, self.key, self.worker_id, self.iteration) == (other.kind, other.key, other.worker_id, other.iteration) and np.array_equal(self.payload, other.payload)

    def reply(self, kind: MessageKind, iteration: Optional[int] = None, payload: Optional[np.ndarray] = None) -> Message:
        return Message(kind=kind, key=self.key, worker_id=self.worker_id, iteration=self.iteration if iteration is None else iteration,
                       payload=np.empty(0) if payload is None else payload)

    @property
    def nbytes(self) -> int:
        return HEADER.size + 8 * self.payload.shape[0]


def encode_message(message: Message) -> bytes:
    """Serialize without the length prefix: fixed header followed by little-endian float64 values."""
    try:
        header = HEADER.pack(message.kind.value, message.key, message.worker_id, message.iteration, message.payload.shape[0])
    except struct.error as ex:
        raise ProtocolError(f"header field out of range in {message!r}: {ex}") from ex
    return header + message.payload.astype("<f8", copy=False).tobytes()


def decode_message(record: bytes) -> Message:
    if len(record) < HEADER.size:
        raise ProtocolError(f"record of {len(record)} bytes is shorter than the {HEADER.size}-byte header")

    kind, key, worker_id, iteration, length = HEADER.unpack_from(record, 0)
    if len(record) != HEADER.size + 8 * length:
        raise ProtocolError(f"declared payload of {length} values does not match record size {len(record)}")

    try:
        decoded_kind = MessageKind(kind)
    except (ValueError, KeyError) as ex:
        raise ProtocolError(f"unknown message kind: {kind}") from ex

    payload = np.frombuffer(record, dtype="<f8", count=length, offset=HEADER.size).astype(np.float64)
    return Message(kind=decoded_kind, key=key, worker_id=worker_id, iteration=iteration, payload=payload)


def frame(message: Message) -> bytes:
    record = encode_message(message)
    return LENGTH_PREFIX.pack(len(record)) + record


def unframe(data: bytes) -> tuple[Message, bytes]:
    """Decode the first length-prefixed record in 'data', returning it with the unconsumed remainder."""
    if len(data) < LENGTH_PREFIX.size:
        raise ProtocolError("incomplete length prefix")

    (size,) = LENGTH_PREFIX.unpack_from(data, 0)
    if size > MAX_FRAME_SIZE:
        raise ProtocolError(f"frame of {size} bytes exceeds the {MAX_FRAME_SIZE}-byte limit")

    end = LENGTH_PREFIX.size + size
    if len(data) < end:
        raise ProtocolError(f"incomplete frame: expected {size} bytes, got {len(data) - LENGTH_PREFIX.size}")

    return decode_message(data[LENGTH_PREFIX.size:end]), data[end:]
