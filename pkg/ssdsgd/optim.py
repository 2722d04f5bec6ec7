from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Optional, Union

import numpy as np
from subtypes import Enum

from .errors import ConfigError, InternalError
from .mixin import ReprMixin

logger = logging.getLogger(__name__)


class Strategy(Enum):
    SSGD = "ssgd"
    ASGD = "asgd"
    SSD_SGD = "ssd-sgd"


class LocalOptimizer(Enum):
    SGD = "sgd"
    GLU = "glu"


@dataclass
class HyperParams:
    """
    Every coefficient of the global (server) and local (worker) update rules in one record.
    Construction does not validate; call validate() once the record is complete.
    """
    lr: float = 0.1
    loc_lr: float = 0.4
    alpha: float = 2.0
    beta: float = 0.5
    wd: float = 0.0
    momentum: float = 0.9
    k: int = 1
    wp: int = 0
    batch_size: int = 32
    workers: int = 1

    def validate(self) -> HyperParams:
        for name in ("lr", "loc_lr"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", field=name)
        for name in ("alpha", "beta", "wd"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"must be non-negative, got {getattr(self, name)}", field=name)
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"must lie in [0, 1), got {self.momentum}", field="momentum")
        for name in ("k", "batch_size", "workers"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(f"must be a positive integer, got {getattr(self, name)}", field=name)
        if int(self.wp) != self.wp or self.wp < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.wp}", field="wp")
        if (1 + self.wp) % self.k:
            raise ConfigError(f"(1 + wp) must be a multiple of k, got wp={self.wp}, k={self.k}", field="wp")
        return self

    def as_dict(self) -> dict[str, Union[int, float]]:
        return {item.name: getattr(self, item.name) for item in fields(self)}


@dataclass(repr=False, eq=False)
class ServerOptState(ReprMixin):
    momentum: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> ServerOptState:
        return cls(momentum=np.zeros(size, dtype=np.float64))


@dataclass(repr=False, eq=False)
class GluState(ReprMixin):
    """pre_weight is the last global weight the worker pulled; loc_update counts the local updates performed."""
    pre_weight: Optional[np.ndarray] = None
    loc_update: int = 0
    refreshes: int = 0


def _check_lengths(reference: np.ndarray, **others: np.ndarray) -> None:
    for name, other in others.items():
        if other.shape != reference.shape:
            raise InternalError(f"{name} has shape {other.shape}, expected {reference.shape}")


def server_momentum_update(w: np.ndarray, grad_avg: np.ndarray, state: ServerOptState, hp: HyperParams) -> tuple[np.ndarray, ServerOptState]:
    """mom <- m*mom - lr*(grad_avg + wd*w); w <- w + mom."""
    _check_lengths(w, grad_avg=grad_avg, momentum=state.momentum)
    state.momentum = hp.momentum * state.momentum - hp.lr * (grad_avg + hp.wd * w)
    return w + state.momentum, state


def glu_grad_sync(w_current: np.ndarray, state: GluState, hp: HyperParams) -> np.ndarray:
    """The global gradient implied by the displacement of the global weight over k momentum steps: (pre_weight - w)*(1-m)/(lr*k)."""
    if state.pre_weight is None:
        raise InternalError("grad_sync requested before pre_weight was initialized")
    _check_lengths(w_current, pre_weight=state.pre_weight)
    return (state.pre_weight - w_current) * (1.0 - hp.momentum) / (hp.lr * hp.k)


def glu_local_update(w_local: np.ndarray, grad_local: np.ndarray, state: GluState, hp: HyperParams) -> tuple[np.ndarray, GluState]:
    """w <- w - loc_lr*(alpha*grad + wd*w + beta*grad_sync), refreshing pre_weight from w every k-th update (after grad_sync is taken)."""
    _check_lengths(w_local, grad_local=grad_local)
    if state.pre_weight is None:
        state.pre_weight = w_local.copy()

    grad_sync = glu_grad_sync(w_local, state, hp)
    if state.loc_update > 0 and state.loc_update % hp.k == 0:
        state.pre_weight = w_local.copy()
        state.refreshes += 1

    updated = w_local - hp.loc_lr * (hp.alpha * grad_local + hp.wd * w_local + hp.beta * grad_sync)
    state.loc_update += 1
    return updated, state


def local_sgd_update(w_local: np.ndarray, grad_local: np.ndarray, hp: HyperParams) -> np.ndarray:
    _check_lengths(w_local, grad_local=grad_local)
    return w_local - hp.loc_lr * grad_local


class LocalUpdater(ReprMixin):
    """The worker-side update rule selected by --optimizer-local, bound to its own state."""

    def __init__(self, kind: Union[LocalOptimizer, str], hp: HyperParams) -> None:
        self.kind, self.hp = LocalOptimizer(kind), hp
        self.state: Optional[GluState] = None

    def __call__(self, w_local: np.ndarray, grad_local: np.ndarray) -> np.ndarray:
        if self.kind == LocalOptimizer.GLU and self.state is not None:
            updated, self.state = glu_local_update(w_local, grad_local, self.state, self.hp)
            return updated
        return local_sgd_update(w_local, grad_local, self.hp)

    def arm(self) -> LocalUpdater:
        """Start GLU bookkeeping. Until armed, the updater applies the plain rule."""
        if self.kind == LocalOptimizer.GLU and self.state is None:
            self.state = GluState()
            logger.debug("GLU state armed.")
        return self
