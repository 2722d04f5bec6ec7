from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Iterator, Optional


class Timer:
    """
    A wall-clock timer that begins on instanciation and can be converted to a float.
    When used as a context manager, upon exiting sets a Timer.period attribute holding the elapsed time. Entering does not reset the timer.
    """

    def __init__(self) -> None:
        self.period: Optional[float] = None
        self.start = time.perf_counter()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(seconds={float(self)})"

    def __str__(self) -> str:
        return f"{float(self):.6f}"

    def __float__(self) -> float:
        return time.perf_counter() - self.start

    def __enter__(self) -> Timer:
        self.period = None
        return self

    def __exit__(self, ex_type: Any, value: Any, trace: Any) -> None:
        self.period = float(self)


class PhaseClock:
    """Accumulates wall time per named phase, e.g. 'compute', 'push', 'pull', 'local'."""

    def __init__(self) -> None:
        self.totals: dict[str, float] = defaultdict(float)
        self.counts: dict[str, int] = defaultdict(int)

    @contextmanager
    def phase(self, name: str) -> Iterator[Timer]:
        with Timer() as timer:
            yield timer
        self.totals[name] += timer.period
        self.counts[name] += 1

    def mean(self, name: str) -> float:
        return self.totals[name] / self.counts[name] if self.counts[name] else 0.0

    def merge(self, other: PhaseClock) -> PhaseClock:
        for name, total in other.totals.items():
            self.totals[name] += total
            self.counts[name] += other.counts[name]
        return self
