from __future__ import annotations

import logging
import threading
from collections import Counter
from typing import Optional

import numpy as np

from ..errors import ProtocolError
from ..mixin import ReprMixin
from ..numkernel import LayerSlice
from ..optim import HyperParams, ServerOptState, server_momentum_update
from .message import Message, MessageKind

logger = logging.getLogger(__name__)


class ParamShard(ReprMixin):
    """
    The server-side state of one key (one model layer): its weight, momentum and push buffers.

    In synchronous mode pushes are buffered per iteration and folded in worker_id order once all K have arrived, so the committed weight
    does not depend on arrival order. Each commit advances 'version' by one. A PullReq asking for a version that has not been committed yet
    is held back and answered by the commit that produces it.

    In asynchronous mode every push is applied immediately, scaled by 1/K so that K pushes move the weight as far as one synchronous
    commit of their average, and pulls are answered at once with the latest weight.

    Each worker's push tags must increase; a repeated or lower tag is rejected. updates_folded counts commits by the number of pushes folded.
    """

    def __init__(self, key: int, weight: np.ndarray, hp: HyperParams, synchronous: bool = True, use_momentum: bool = True) -> None:
        self.key, self.hp, self.synchronous, self.use_momentum = key, hp, synchronous, use_momentum
        self.weight = np.array(weight, dtype=np.float64)
        self.opt_state = ServerOptState.zeros(self.weight.shape[0])
        self.grad_accumulator = np.zeros_like(self.weight)
        self.version = 0
        self.updates_folded: Counter[int] = Counter()

        self._buckets: dict[int, dict[int, np.ndarray]] = {}
        self._deferred: list[Message] = []
        self._last_push: dict[int, int] = {}
        self._lock = threading.RLock()

    @property
    def pending_push_count(self) -> int:
        """Pushes buffered for the next iteration to commit."""
        return len(self._buckets.get(self.version + 1, {}))

    @property
    def deferred_pulls(self) -> int:
        return len(self._deferred)

    def read(self) -> np.ndarray:
        with self._lock:
            return self.weight.copy()

    def handle(self, msg: Message) -> list[Message]:
        with self._lock:
            if msg.key != self.key:
                raise ProtocolError(f"message for key {msg.key} delivered to shard {self.key}")

            if msg.kind == MessageKind.PUSH:
                return self._handle_push(msg)
            if msg.kind == MessageKind.PULL_REQ:
                return self._handle_pull(msg)

            raise ProtocolError(f"a server cannot handle {msg.kind.name} messages")

    def _handle_push(self, msg: Message) -> list[Message]:
        if msg.payload.shape != self.weight.shape:
            raise ProtocolError(f"push of {msg.payload.shape[0]} values to key {self.key} holding {self.weight.shape[0]}")
        if msg.iteration <= self._last_push.get(msg.worker_id, 0):
            raise ProtocolError(f"duplicate or reordered push from worker {msg.worker_id} for iteration {msg.iteration} on key {self.key}")
        self._last_push[msg.worker_id] = msg.iteration

        replies = [msg.reply(MessageKind.PUSH_ACK)]

        if not self.synchronous:
            self._commit(msg.payload / self.hp.workers, contributions=1)
            return replies

        if msg.iteration <= self.version:
            raise ProtocolError(f"push for iteration {msg.iteration} arrived after key {self.key} committed version {self.version}")

        self._buckets.setdefault(msg.iteration, {})[msg.worker_id] = msg.payload.copy()
        while len(self._buckets.get(self.version + 1, {})) == self.hp.workers:
            bucket = self._buckets.pop(self.version + 1)
            for worker_id in sorted(bucket):
                self.grad_accumulator += bucket[worker_id]
            self._commit(self.grad_accumulator / self.hp.workers, contributions=len(bucket))
            self.grad_accumulator[:] = 0.0
            replies.extend(self._release_deferred())

        return replies

    def _handle_pull(self, msg: Message) -> list[Message]:
        if not self.synchronous or msg.iteration <= self.version:
            return [msg.reply(MessageKind.PULL_RESP, iteration=self.version, payload=self.weight.copy())]

        logger.debug("Key %d deferring pull from worker %d for version %d (at %d).", self.key, msg.worker_id, msg.iteration, self.version)
        self._deferred.append(msg)
        return []

    def _commit(self, grad: np.ndarray, contributions: int) -> None:
        if self.use_momentum:
            self.weight, self.opt_state = server_momentum_update(self.weight, grad, self.opt_state, self.hp)
        else:
            self.weight = self.weight - self.hp.lr * (grad + self.hp.wd * self.weight)
        self.version += 1
        self.updates_folded[contributions] += 1

    def _release_deferred(self) -> list[Message]:
        ready = [pull for pull in self._deferred if pull.iteration <= self.version]
        self._deferred = [pull for pull in self._deferred if pull.iteration > self.version]
        return [pull.reply(MessageKind.PULL_RESP, iteration=self.version, payload=self.weight.copy()) for pull in ready]


def server_handle(shard: ParamShard, msg: Message, hp: Optional[HyperParams] = None) -> list[Message]:
    """Apply one message to a shard and return its replies (zero or more)."""
    if hp is not None and hp is not shard.hp:
        shard.hp = hp
    return shard.handle(msg)


class ParameterServer(ReprMixin):
    """One server process: a group of shards. Keys are dealt to servers round-robin."""

    def __init__(self, index: int) -> None:
        self.index = index
        self.shards: dict[int, ParamShard] = {}

    def add(self, shard: ParamShard) -> ParameterServer:
        self.shards[shard.key] = shard
        return self

    @classmethod
    def build(cls, layer_spec: list[LayerSlice], weight: np.ndarray, hp: HyperParams, num_servers: int, synchronous: bool = True, use_momentum: bool = True) -> list[ParameterServer]:
        servers = [cls(index) for index in range(num_servers)]
        for key, layer in enumerate(layer_spec):
            servers[key % num_servers].add(ParamShard(key=key, weight=layer.of(weight), hp=hp, synchronous=synchronous, use_momentum=use_momentum))
        return servers
