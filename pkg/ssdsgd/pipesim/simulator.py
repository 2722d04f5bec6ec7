from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
import simpy
from pathmagic import File, PathLike

from ..errors import ConfigError
from ..mixin import ReprMixin
from ..optim import Strategy
from .profile import TimingProfile

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("time", "resource", "event", "layer", "iteration")
RESOURCES = ("compute", "send", "server", "receive")


@dataclass(frozen=True)
class TraceEvent:
    time: float
    resource: str
    event: str
    layer: Optional[int]
    iteration: int

    def as_row(self) -> list:
        return [repr(self.time), self.resource, self.event, "" if self.layer is None else self.layer, self.iteration]


@dataclass(eq=False)
class SimulationResult(ReprMixin):
    """
    average: steady-state time per iteration
    stall: mean time the worker sat idle per pull waiting for the pulled weight before its local update
    """
    strategy: Strategy
    k: int
    average: float
    stall: float
    starts: list[float] = field(default_factory=list)
    pull_done: list[float] = field(default_factory=list)
    trace: list[TraceEvent] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        return max((event.time for event in self.trace), default=0.0)

    def rows(self) -> Iterator[list]:
        yield list(TRACE_COLUMNS)
        for event in self.trace:
            yield event.as_row()

    def write_trace(self, path: PathLike) -> File:
        file = File.from_pathlike(path)
        with open(file, "w", newline="") as stream:
            csv.writer(stream).writerows(self.rows())
        return file

    def busy_time(self, resource: str) -> float:
        """Total time the named resource spent serving requests."""
        if resource not in RESOURCES:
            raise ValueError(f"unknown resource {resource!r}, expected one of: {', '.join(RESOURCES)}")

        busy, opened = 0.0, {}
        for event in self.trace:
            if event.resource != resource:
                continue
            name, _, edge = event.event.rpartition("-")
            if edge == "start":
                opened[(name, event.layer, event.iteration)] = event.time
            else:
                busy += event.time - opened.pop((name, event.layer, event.iteration))
        return busy


class _Pipeline:
    """
    One worker's iterations on a compute engine, a send channel, a receive channel and the server.

    Gradients become sendable layer by layer as their backward pass completes, last layer first. A push only occupies the send channel.
    A pull iteration (every iteration under ssgd and asgd, once every k under ssd-sgd) runs a round trip per layer from last to first:
    send, then synchronization wait and update on the server, then the reply on the receive channel. It claims the send channel when the
    iteration starts and keeps it until its last reply arrives, so the layers' round trips never overlap one another or a later push.

    Requests for the send channel are served in arrival order. With priority set, waiting pushes go out front layer first instead,
    still behind a pull that holds the channel. Under ssgd and asgd the next iteration starts when the pull completes. Under ssd-sgd it
    starts after the first layer's local update, and the iteration after a pull iteration cannot run that update before the pull completes.
    """

    def __init__(self, profile: TimingProfile, strategy: Strategy, k: int, n_iters: int, priority: bool) -> None:
        self.profile, self.strategy, self.k, self.n_iters, self.priority = profile, strategy, k, n_iters, priority
        self.env = simpy.Environment()
        self.send = simpy.PriorityResource(self.env, capacity=1)
        self.server = simpy.Resource(self.env, capacity=1)
        self.receive = simpy.Resource(self.env, capacity=1)
        self.trace: list[TraceEvent] = []
        self.starts: list[float] = []
        self.pull_done: dict[int, float] = {}
        self.stalls: list[float] = []

    def is_pull(self, iteration: int) -> bool:
        return self.strategy != Strategy.SSD_SGD or iteration % self.k == 0

    def run(self) -> _Pipeline:
        self.env.process(self.worker())
        self.env.run()
        return self

    def busy(self, resource: str, event: str, layer: Optional[int], iteration: int, duration: float):
        self.trace.append(TraceEvent(self.env.now, resource, f"{event}-start", layer, iteration))
        yield self.env.timeout(duration)
        self.trace.append(TraceEvent(self.env.now, resource, f"{event}-end", layer, iteration))

    def worker(self):
        profile, pending = self.profile, None
        for iteration in range(self.n_iters):
            self.starts.append(self.env.now)
            backward_done = [self.env.event() for _ in range(profile.layers)]
            pull = self.env.process(self.pull(iteration, backward_done)) if self.is_pull(iteration) else None

            yield from self.busy("compute", "forward", None, iteration, profile.forward)
            for layer in reversed(range(profile.layers)):
                yield from self.busy("compute", "backward", layer + 1, iteration, float(profile.backward[layer]))
                backward_done[layer].succeed()
                if pull is None:
                    self.env.process(self.push(iteration, layer))

            if self.strategy != Strategy.SSD_SGD:
                yield pull
                continue

            if pending is not None:
                ready = self.env.now
                yield pending
                self.stalls.append(self.env.now - ready)
            yield from self.busy("compute", "local", 1, iteration, float(profile.local[0]))
            pending = pull

    def pull(self, iteration: int, backward_done: list[simpy.Event]):
        profile = self.profile
        with self.send.request(priority=0) as outbound:
            yield outbound
            for layer in reversed(range(profile.layers)):
                yield backward_done[layer]
                yield from self.busy("send", "send", layer + 1, iteration, float(profile.send[layer]))

                with self.server.request() as server:
                    yield server
                    yield from self.busy("server", "sync", layer + 1, iteration, float(profile.sync[layer]))
                    yield from self.busy("server", "update", layer + 1, iteration, float(profile.update[layer]))

                with self.receive.request() as inbound:
                    yield inbound
                    yield from self.busy("receive", "receive", layer + 1, iteration, float(profile.receive[layer]))

        self.pull_done[iteration] = self.env.now

    def push(self, iteration: int, layer: int):
        with self.send.request(priority=layer + 1 if self.priority else 0) as request:
            yield request
            yield from self.busy("send", "send", layer + 1, iteration, float(self.profile.send[layer]))

    def steady_average(self) -> float:
        """Spacing of pull-iteration starts over all but the first quarter of the windows. Falls back to makespan over iterations for short runs."""
        period = self.k if self.strategy == Strategy.SSD_SGD else 1
        boundaries = self.starts[::period]
        if len(boundaries) >= 3:
            skip = max(1, len(boundaries) // 4)
            return (boundaries[-1] - boundaries[skip]) / ((len(boundaries) - 1 - skip) * period)

        logger.warning("Only %d pull windows simulated; averaging over the whole run.", len(boundaries))
        return self.env.now / self.n_iters


def simulate_pipeline(profile: TimingProfile, strategy: Union[Strategy, str], k: int = 1, n_iters: int = 50, priority: bool = False) -> SimulationResult:
    """
    Simulate n_iters iterations of one worker under a strategy. The asgd pipeline is the ssgd one without synchronization waits.
    With priority set, pushes waiting for the send channel go out front layer first rather than in backward order.
    """
    strategy = Strategy(strategy)
    if k < 1:
        raise ConfigError(f"must be at least 1, got {k}", field="k")
    if n_iters < k:
        raise ConfigError(f"must be at least k={k}, got {n_iters}", field="n_iters")

    if strategy == Strategy.ASGD:
        profile = profile.replace(sync=np.zeros(profile.layers))

    pipeline = _Pipeline(profile, strategy, k, n_iters, priority).run()
    result = SimulationResult(
        strategy=strategy, k=k, average=pipeline.steady_average(), stall=float(np.mean(pipeline.stalls)) if pipeline.stalls else 0.0,
        starts=pipeline.starts, pull_done=[pipeline.pull_done[iteration] for iteration in sorted(pipeline.pull_done)], trace=pipeline.trace,
    )
    logger.debug("Simulated %s with k=%d over %d iterations: %.6f per iteration.", strategy.value, k, n_iters, result.average)
    return result
