from __future__ import annotations

import numpy as np

from ..functions import relative_error
from .model import Minibatch, Model


def finite_difference_grad(model: Model, batch: Minibatch, step: float = 1e-6) -> np.ndarray:
    """Central differences of forward_loss, one coordinate at a time. The model's own params are never touched."""
    params = model.params.copy()
    grad = np.empty_like(params)

    for index in range(params.shape[0]):
        shifted = params.copy()
        shifted[index] = params[index] + step
        upper = model.with_params(shifted).forward_loss(batch)
        shifted[index] = params[index] - step
        lower = model.with_params(shifted).forward_loss(batch)
        grad[index] = (upper - lower) / (2.0 * step)

    return grad


def gradient_error(model: Model, batch: Minibatch, step: float = 1e-6) -> float:
    """Relative error between backward_grad and central finite differences."""
    return relative_error(model.backward_grad(batch), finite_difference_grad(model, batch, step=step))
