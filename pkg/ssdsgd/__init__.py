__all__ = [
    "SsdSgdError", "ConfigError", "ProfileError", "InternalError", "ProtocolError", "TransportTimeout",
    "class_name", "stringify_exception", "split_seed", "worker_rng", "relative_error", "ceil_div", "parse_int_range",
    "ReprMixin",
    "Timer", "PhaseClock", "Profiler",
    "with_retries", "exit_codes",
    "HyperParams", "LocalOptimizer", "Strategy", "ServerOptState", "GluState", "LocalUpdater",
    "server_momentum_update", "glu_grad_sync", "glu_local_update", "local_sgd_update",
]

from .errors import SsdSgdError, ConfigError, ProfileError, InternalError, ProtocolError, TransportTimeout
from .functions import class_name, stringify_exception, split_seed, worker_rng, relative_error, ceil_div, parse_int_range
from .mixin import ReprMixin
from .classes import Timer, PhaseClock, Profiler
from .decorators import with_retries, exit_codes
from .optim import (
    HyperParams, LocalOptimizer, Strategy, ServerOptState, GluState, LocalUpdater,
    server_momentum_update, glu_grad_sync, glu_local_update, local_sgd_update,
)
