from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..classes import PhaseClock, Timer
from ..errors import ConfigError, InternalError
from ..functions import ceil_div, split_seed, worker_rng
from ..mixin import ReprMixin
from ..numkernel import BatchStream, Dataset, DatasetSpec, Model, ModelKind
from ..optim import HyperParams, LocalOptimizer
from ..pipesim import TimingProfile, simulate_pipeline, ssgd_iter_time
from .metrics import MetricRecord
from .server import ParameterServer, ParamShard
from .transport import Stage, Transport, TransportKind, make_transport
from .worker import Strategy, WorkerReplica, worker_delay_step

logger = logging.getLogger(__name__)


@dataclass
class RuntimeOptions:
    strategy: Strategy = Strategy.SSD_SGD
    local_optimizer: LocalOptimizer = LocalOptimizer.GLU
    servers: int = 1
    devices: int = 1
    deterministic: bool = True
    transport: TransportKind = TransportKind.INPROC
    latency: float = 0.0
    bandwidth: float = float("inf")
    pull_timeout: float = 5.0
    pull_attempts: int = 3
    asgd_momentum: bool = True

    def validate(self) -> RuntimeOptions:
        self.strategy, self.local_optimizer, self.transport = Strategy(self.strategy), LocalOptimizer(self.local_optimizer), TransportKind(self.transport)
        for name in ("servers", "devices", "pull_attempts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", field=name)
        if self.latency < 0.0 or self.bandwidth <= 0.0 or self.pull_timeout <= 0.0:
            raise ConfigError("latency must be non-negative; bandwidth and pull_timeout positive", field="latency")
        return self


@dataclass
class TrainingConfig:
    """Everything a training run needs. 'iterations' counts global iterations, warm-up included."""
    model: ModelKind = ModelKind.LOGISTIC_REGRESSION
    data: DatasetSpec = field(default_factory=lambda: DatasetSpec(kind=ModelKind.LOGISTIC_REGRESSION))
    hp: HyperParams = field(default_factory=HyperParams)
    options: RuntimeOptions = field(default_factory=RuntimeOptions)
    iterations: int = 2000
    eval_interval: int = 50
    eval_fraction: float = 0.2
    hidden: int = 16
    seed: int = 0
    profile: Optional[TimingProfile] = None

    def validate(self) -> TrainingConfig:
        self.model = ModelKind(self.model)
        self.hp.validate()
        self.options.validate()
        if self.hp.batch_size % self.options.devices:
            raise ConfigError(f"batch size {self.hp.batch_size} is not divisible by {self.options.devices} devices", field="devices")
        if self.iterations < 1:
            raise ConfigError(f"must be positive, got {self.iterations}", field="iterations")
        if self.eval_interval < 1:
            raise ConfigError(f"must be positive, got {self.eval_interval}", field="eval_interval")
        if self.options.strategy == Strategy.SSD_SGD and self.hp.wp > self.iterations:
            raise ConfigError(f"warm-up of {self.hp.wp} iterations exceeds the budget of {self.iterations}", field="wp")
        return self

    @property
    def seeds(self) -> tuple[int, int, int]:
        """(dataset, init, scheduler) seeds derived from the master seed."""
        return split_seed(self.seed)


class Cluster(ReprMixin):
    """S parameter servers holding one shard per model layer, K workers, and the transport between them."""

    def __init__(self, config: TrainingConfig, train: Dataset) -> None:
        self.config, self.hp, self.options = config, config.hp, config.options
        _, init_seed, scheduler_seed = config.seeds
        self.scheduler_seed = scheduler_seed

        self.template = Model.initialize(config.model, input_dim=train.dim, seed=init_seed, hidden=config.hidden)
        synchronous = self.options.strategy != Strategy.ASGD
        self.servers = ParameterServer.build(self.template.layer_spec, self.template.params, self.hp, self.options.servers,
                                             synchronous=synchronous, use_momentum=synchronous or self.options.asgd_momentum)
        self.shards: dict[int, ParamShard] = {key: shard for server in self.servers for key, shard in server.shards.items()}
        self.transport: Transport = make_transport(self.options.transport, self.shards, self.hp.workers, latency=self.options.latency,
                                                   bandwidth=self.options.bandwidth, real_clock=not self.options.deterministic)

        timeout = None if self.options.deterministic else self.options.pull_timeout
        self.workers = [
            WorkerReplica(
                worker_id=worker_id, model=self.template, transport=self.transport, hp=self.hp,
                stream=BatchStream(train, train.shard(worker_id, self.hp.workers), self.hp.batch_size, worker_rng(scheduler_seed, worker_id)),
                strategy=self.options.strategy, local_optimizer=self.options.local_optimizer, devices=self.options.devices,
                pull_timeout=timeout, pull_attempts=self.options.pull_attempts,
            )
            for worker_id in range(self.hp.workers)
        ]

        for worker in self.workers:
            worker.pull(0, Stage.INIT)

    @property
    def iteration(self) -> int:
        return min(worker.t for worker in self.workers)

    def global_weight(self) -> np.ndarray:
        return self.template.join([self.shards[key].read() for key in sorted(self.shards)])

    def global_model(self) -> Model:
        return self.template.with_params(self.global_weight())

    def pushes(self) -> int:
        return sum(worker.pushes for worker in self.workers)

    def pulls(self, include_initial: bool = False) -> int:
        return sum(worker.pulls for worker in self.workers) - (0 if include_initial else len(self.workers))

    def phase_clock(self) -> PhaseClock:
        merged = PhaseClock()
        for worker in self.workers:
            merged.merge(worker.clock)
        return merged

    def measured_profile(self) -> TimingProfile:
        """A TimingProfile from the wall time each phase took in this run, shared out across layers by parameter count."""
        clock = self.phase_clock()
        share = np.array([layer.length for layer in self.template.layer_spec], dtype=np.float64)
        share /= share.sum()
        compute = clock.mean("compute")
        return TimingProfile(
            forward=compute / 3.0, backward=2.0 * compute / 3.0 * share, send=clock.mean("push") * share, receive=clock.mean("pull") * share,
            sync=np.zeros_like(share), update=np.zeros_like(share), local=clock.mean("local") * share,
        )

    def synchronous_round(self, stage: Stage = Stage.WARMUP) -> None:
        for worker in self.workers:
            worker.push_gradient(stage)
        for worker in self.workers:
            worker.finish_synchronous_iteration(stage)

    def delay_round(self) -> None:
        for worker in self.workers:
            worker_delay_step(worker, self)

    def async_round(self) -> None:
        """All workers compute on the weight they hold; pushes (each followed by that worker's pull) are then applied in a seeded order."""
        order = np.random.default_rng([self.scheduler_seed, self.iteration]).permutation(len(self.workers))
        grads = {worker.worker_id: worker.compute_gradient() for worker in self.workers}
        for worker_id in order:
            worker = self.workers[int(worker_id)]
            worker.async_push(grads[worker.worker_id])
            worker.async_pull()

    def snapshot_local_weights(self) -> None:
        for worker in self.workers:
            worker.local_weight = worker.receive_buffer.copy()

    def close(self) -> None:
        self.transport.close()


def run_warmup(cluster: Cluster, hp: Optional[HyperParams] = None) -> Cluster:
    """Run wp synchronous iterations; each worker then takes the last pulled weight as its local weight w'."""
    hp = cluster.hp if hp is None else hp
    logger.info("Warm-up: %d synchronous iterations.", hp.wp)
    if cluster.options.deterministic:
        for _ in range(hp.wp):
            cluster.synchronous_round(Stage.WARMUP)
    else:
        _run_threads(cluster, lambda worker: [worker.synchronous_step(Stage.WARMUP) for _ in range(hp.wp)])

    cluster.snapshot_local_weights()
    if len({worker.local_weight.tobytes() for worker in cluster.workers}) != 1:
        raise InternalError("workers disagree on the weight pulled at the end of warm-up")
    return cluster


class _Evaluator:
    def __init__(self, config: TrainingConfig, cluster: Cluster, train: Dataset, evaluation: Dataset) -> None:
        self.config, self.cluster, self.train, self.evaluation = config, cluster, train, evaluation
        self.timer = Timer()
        self.records: list[MetricRecord] = []
        self._lock = threading.Lock()
        self._per_iteration = _simulated_iteration_times(config)

    def due(self, iteration: int) -> bool:
        return iteration % self.config.eval_interval == 0 or iteration == self.config.iterations

    def record(self, iteration: int) -> MetricRecord:
        model = self.cluster.global_model()
        hp = self.config.hp
        record = MetricRecord(
            iteration=iteration,
            epoch=iteration * hp.workers * hp.batch_size / len(self.train),
            train_loss=model.forward_loss(self.train.batch()),
            eval_accuracy=model.accuracy(self.evaluation.batch()),
            wall_time=self.cluster.transport.logical_time if self.config.options.deterministic else float(self.timer),
            simulated_time=self._simulated_time(iteration),
            pushes=self.cluster.pushes(),
            pulls=self.cluster.pulls(),
        )
        with self._lock:
            self.records.append(record)
        logger.info("iteration=%d loss=%.6f accuracy=%.4f pushes=%d pulls=%d", record.iteration, record.train_loss, record.eval_accuracy, record.pushes, record.pulls)
        return record

    def _simulated_time(self, iteration: int) -> Optional[float]:
        if self._per_iteration is None:
            return None
        synchronous, steady = self._per_iteration
        warm = min(iteration, self.config.hp.wp) if self.config.options.strategy == Strategy.SSD_SGD else 0
        return warm * synchronous + (iteration - warm) * steady


def _simulated_iteration_times(config: TrainingConfig) -> Optional[tuple[float, float]]:
    if config.profile is None:
        return None
    steady = simulate_pipeline(config.profile, config.options.strategy, k=config.hp.k, n_iters=max(4 * config.hp.k, 8)).average
    return ssgd_iter_time(config.profile), steady


def _run_threads(cluster: Cluster, body) -> None:
    errors: list[BaseException] = []

    def target(worker: WorkerReplica) -> None:
        try:
            body(worker)
        except BaseException as ex:
            errors.append(ex)

    threads = [threading.Thread(target=target, args=(worker,), name=f"worker-{worker.worker_id}", daemon=True) for worker in cluster.workers]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if errors:
        raise errors[0]


def _prepare(config: TrainingConfig) -> tuple[Cluster, Dataset, Dataset]:
    config.validate()
    dataset_seed = config.seeds[0]
    data = DatasetSpec(kind=config.data.kind, n_samples=config.data.n_samples, dim=config.data.dim, noise=config.data.noise, seed=dataset_seed)
    train, evaluation = data.make().split(config.eval_fraction)
    return Cluster(config, train), train, evaluation


def run_training(config: TrainingConfig) -> Iterator[MetricRecord]:
    """Train with the configured strategy, yielding one MetricRecord per evaluation interval (and one for the final iteration)."""
    if Strategy(config.options.strategy) == Strategy.ASGD:
        yield from run_asgd(config)
        return

    cluster, train, evaluation = _prepare(config)
    evaluator = _Evaluator(config, cluster, train, evaluation)
    strategy = config.options.strategy
    try:
        if config.options.deterministic:
            yield from _deterministic_training(config, cluster, evaluator)
        else:
            _threaded_training(config, cluster, evaluator)
            yield from sorted(evaluator.records, key=lambda record: record.iteration)
    finally:
        cluster.close()

    logger.info("Finished %s run: %d iterations, %d pushes, %d pulls.", strategy.value, config.iterations, cluster.pushes(), cluster.pulls())


def _deterministic_training(config: TrainingConfig, cluster: Cluster, evaluator: _Evaluator) -> Iterator[MetricRecord]:
    warmup = config.hp.wp if config.options.strategy == Strategy.SSD_SGD else config.iterations
    for iteration in range(1, warmup + 1):
        cluster.synchronous_round(Stage.WARMUP)
        if evaluator.due(iteration):
            yield evaluator.record(iteration)

    if config.options.strategy != Strategy.SSD_SGD:
        return

    cluster.snapshot_local_weights()
    logger.info("Delay stage: pulling every %d iterations.", config.hp.k)
    for iteration in range(warmup + 1, config.iterations + 1):
        cluster.delay_round()
        if evaluator.due(iteration):
            yield evaluator.record(iteration)


def _threaded_training(config: TrainingConfig, cluster: Cluster, evaluator: _Evaluator) -> None:
    warmup = config.hp.wp if config.options.strategy == Strategy.SSD_SGD else config.iterations

    def body(worker: WorkerReplica) -> None:
        for _ in range(warmup):
            worker.synchronous_step(Stage.WARMUP)
            if worker.worker_id == 0 and evaluator.due(worker.t):
                evaluator.record(worker.t)
        if config.options.strategy != Strategy.SSD_SGD:
            return

        worker.local_weight = worker.receive_buffer.copy()
        for _ in range(config.iterations - warmup):
            worker.delay_step()
            if worker.worker_id == 0 and evaluator.due(worker.t):
                evaluator.record(worker.t)

    _run_threads(cluster, body)


def run_asgd(config: TrainingConfig) -> Iterator[MetricRecord]:
    """Asynchronous baseline: every push updates the server at once and every pull returns the latest weight."""
    config.options.strategy = Strategy.ASGD
    cluster, train, evaluation = _prepare(config)
    evaluator = _Evaluator(config, cluster, train, evaluation)
    try:
        if config.options.deterministic:
            for iteration in range(1, config.iterations + 1):
                cluster.async_round()
                if evaluator.due(iteration):
                    yield evaluator.record(iteration)
        else:
            def body(worker: WorkerReplica) -> None:
                for _ in range(config.iterations):
                    worker.async_push(worker.compute_gradient())
                    worker.async_pull()
                    if worker.worker_id == 0 and evaluator.due(worker.t):
                        evaluator.record(worker.t)

            _run_threads(cluster, body)
            yield from sorted(evaluator.records, key=lambda record: record.iteration)
    finally:
        cluster.close()


def train_to_completion(config: TrainingConfig) -> tuple[list[MetricRecord], Cluster]:
    """Run synchronously (deterministic mode only) and hand back the cluster for inspection."""
    config.validate()
    if not config.options.deterministic:
        raise ConfigError("inspection runs require deterministic mode", field="deterministic")

    cluster, train, evaluation = _prepare(config)
    evaluator = _Evaluator(config, cluster, train, evaluation)
    if config.options.strategy == Strategy.ASGD:
        for iteration in range(1, config.iterations + 1):
            cluster.async_round()
            if evaluator.due(iteration):
                evaluator.record(iteration)
    else:
        for _ in _deterministic_training(config, cluster, evaluator):
            pass
    cluster.close()
    return evaluator.records, cluster


def iterations_per_epoch(config: TrainingConfig, n_train: int) -> int:
    return ceil_div(n_train, config.hp.workers * config.hp.batch_size)

