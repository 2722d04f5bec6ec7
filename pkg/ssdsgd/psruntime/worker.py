from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
from maybe import Maybe

from ..classes import PhaseClock
from ..decorators import with_retries
from ..errors import ProtocolError
from ..mixin import ReprMixin
from ..numkernel import BatchStream, Model
from ..optim import HyperParams, LocalOptimizer, LocalUpdater, Strategy
from .message import Message, MessageKind
from .transport import Stage, Transport

if TYPE_CHECKING:
    from .cluster import Cluster

logger = logging.getLogger(__name__)


class WorkerReplica(ReprMixin):
    """
    One worker: its local weight w', local optimizer state and iteration counters.

    'num' counts iterations and alone decides the pull cadence; 't' is the time step carried in push tags (both advance together).
    The weight a pull returns first lands in 'receive_buffer' and is then copied into 'local_weight'.
    """

    def __init__(self, worker_id: int, model: Model, stream: BatchStream, transport: Transport, hp: HyperParams,
                 strategy: Union[Strategy, str] = Strategy.SSD_SGD, local_optimizer: Union[LocalOptimizer, str] = LocalOptimizer.GLU,
                 devices: int = 1, pull_timeout: Optional[float] = None, pull_attempts: int = 3, retry_delay: float = 0.0) -> None:
        self.worker_id, self.model, self.stream, self.transport, self.hp = worker_id, model, stream, transport, hp
        self.strategy, self.local_optimizer = Strategy(strategy), LocalOptimizer(local_optimizer)
        self.devices, self.pull_timeout, self.pull_attempts, self.retry_delay = devices, pull_timeout, pull_attempts, retry_delay

        self.updater = LocalUpdater(self.local_optimizer, hp)
        self.local_weight = np.array(model.params, dtype=np.float64)
        self.receive_buffer: Optional[np.ndarray] = None
        self.num = self.t = 0
        self.pushes = self.pulls = 0
        self.last_loss: Optional[float] = None
        self.clock = PhaseClock()
        self._keys = list(range(len(model.layer_spec)))

    @property
    def glu_state(self):
        return self.updater.state

    @property
    def is_pull_iteration(self) -> bool:
        return self.num % self.hp.k == self.hp.k - 1

    def compute_gradient(self) -> np.ndarray:
        """Gradient of the next minibatch at the local weight, averaged over the worker's devices."""
        with self.clock.phase("compute"):
            batch = next(self.stream)
            model = self.model.with_params(self.local_weight)
            self.last_loss = model.forward_loss(batch)
            if self.devices == 1:
                return model.backward_grad(batch)

            grads = [model.backward_grad(part) for part in batch.split(self.devices)]
            total = grads[0].copy()
            for grad in grads[1:]:
                total += grad
            return total / self.devices

    def push(self, grad: np.ndarray, stage: Stage) -> None:
        with self.clock.phase("push"):
            for key, part in zip(self._keys, self.model.split(grad)):
                self.transport.send(Message(kind=MessageKind.PUSH, key=key, worker_id=self.worker_id, iteration=self.t + 1, payload=part), stage)
        self.pushes += 1

    def request_pull(self, version: int, stage: Stage) -> None:
        for key in self._keys:
            self.transport.send(Message(kind=MessageKind.PULL_REQ, key=key, worker_id=self.worker_id, iteration=version), stage)

    def collect_pull(self) -> np.ndarray:
        """Gather one PullResp per key into the receive buffer, waiting (with bounded retries) when a timeout is configured."""
        with self.clock.phase("pull"):
            parts: dict[int, np.ndarray] = {}
            while len(parts) < len(self._keys):
                reply = self._receive()
                if reply.kind != MessageKind.PULL_RESP:
                    raise ProtocolError(f"worker {self.worker_id} expected PULL_RESP, got {reply.kind.name}")
                parts[reply.key] = reply.payload
            self.receive_buffer = self.model.join([parts[key] for key in self._keys])
        self.pulls += 1
        return self.receive_buffer

    def pull(self, version: int, stage: Stage) -> np.ndarray:
        self.request_pull(version, stage)
        self.local_weight = self.collect_pull().copy()
        return self.local_weight

    def push_gradient(self, stage: Stage = Stage.WARMUP) -> np.ndarray:
        grad = self.compute_gradient()
        self.push(grad, stage)
        return grad

    def finish_synchronous_iteration(self, stage: Stage = Stage.WARMUP) -> None:
        """Pull the weight committed for this iteration (waits for all K pushes), then advance."""
        self.pull(self.t + 1, stage)
        self.t += 1
        self.num += 1

    def synchronous_step(self, stage: Stage = Stage.WARMUP) -> None:
        self.push_gradient(stage)
        self.finish_synchronous_iteration(stage)

    def delay_step(self) -> None:
        """
        One delay-stage iteration: compute, local update and, once every k iterations, a pull of the previous iteration's global weight,
        then the push. The pulled weight overwrites the locally updated one.

        The pull goes out before this worker's push, so version t+1 cannot be committed yet and every worker receives exactly version t.
        """
        grad = self.compute_gradient()
        with self.clock.phase("local"):
            self.local_weight = self.updater(self.local_weight, grad)

        if self.is_pull_iteration:
            self.pull(self.t, Stage.DELAY)
            self.updater.arm()

        self.push(grad, Stage.DELAY)
        self.t += 1
        self.num += 1

    def async_push(self, grad: np.ndarray) -> None:
        self.push(grad, Stage.ASYNC)

    def async_pull(self) -> None:
        self.pull(self.t + 1, Stage.ASYNC)
        self.t += 1
        self.num += 1

    def _receive(self) -> Message:
        if self.pull_timeout is None:
            return self.transport.receive(self.worker_id)
        return with_retries(self.pull_attempts, retry_delay=self.retry_delay)(self.transport.receive)(self.worker_id, timeout=self.pull_timeout)


def worker_delay_step(replica: WorkerReplica, cluster: Optional[Cluster] = None, hp: Optional[HyperParams] = None) -> WorkerReplica:
    """Run one delay-stage iteration of a worker and return it. Hyperparameters default to the cluster's, whose transport the worker must use."""
    if cluster is not None:
        if replica.transport is not cluster.transport:
            raise ProtocolError(f"worker {replica.worker_id} is not connected to this cluster")
        hp = Maybe(hp).else_(cluster.hp)
    if hp is not None and hp is not replica.hp:
        replica.hp = replica.updater.hp = hp
    replica.delay_step()
    return replica
