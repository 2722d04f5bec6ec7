__all__ = [
    "PhaseClock", "Profiler", "Timer",
]

from .profiler import Profiler
from .timer import PhaseClock, Timer
