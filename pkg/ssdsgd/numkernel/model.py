from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from subtypes import Enum

from ..errors import ConfigError, InternalError
from ..mixin import ReprMixin


class ModelKind(Enum):
    LINEAR_REGRESSION = "linear-regression"
    LOGISTIC_REGRESSION = "logistic-regression"
    MLP_2LAYER = "mlp-2layer"


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LayerSlice:
    """One named slice of the flat parameter vector. Each slice is a parameter-server key."""
    name: str
    offset: int
    length: int

    @property
    def stop(self) -> int:
        return self.offset + self.length

    def of(self, vector: np.ndarray) -> np.ndarray:
        return vector[self.offset:self.stop]


@dataclass(frozen=True)
class Minibatch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ConfigError(f"expected a 2-d feature matrix, got shape {self.features.shape}", field="features")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError(f"{self.labels.shape[0] if self.labels.ndim else 0} labels for {self.features.shape[0]} rows", field="labels")
        if not self.features.shape[0]:
            raise ConfigError("a minibatch needs at least one row", field="batch_size")

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def split(self, parts: int) -> list[Minibatch]:
        """Split row-wise into equally sized sub-batches, one per local device."""
        if parts < 1 or self.batch_size % parts:
            raise ConfigError(f"batch of {self.batch_size} rows cannot be split across {parts} devices", field="devices")
        size = self.batch_size // parts
        return [Minibatch(self.features[start:start + size], self.labels[start:start + size]) for start in range(0, self.batch_size, size)]


def layer_spec_for(kind: ModelKind, input_dim: int, hidden: int) -> list[LayerSlice]:
    if kind == ModelKind.MLP_2LAYER:
        shapes = [("hidden.weight", hidden * input_dim), ("hidden.bias", hidden), ("output.weight", hidden), ("output.bias", 1)]
    else:
        shapes = [("weight", input_dim), ("bias", 1)]

    spec, offset = [], 0
    for name, length in shapes:
        spec.append(LayerSlice(name=name, offset=offset, length=length))
        offset += length
    return spec


class Model(ReprMixin):
    """
    A small differentiable model over a flat float64 parameter vector. The layer_spec partitions the vector into named slices.
    forward_loss and backward_grad are pure functions of (params, batch); backward_grad returns the raw gradient of the mean batch loss.
    """

    def __init__(self, kind: Union[ModelKind, str], input_dim: int, params: Optional[np.ndarray] = None, hidden: int = 16) -> None:
        try:
            self.kind = ModelKind(kind)
        except (ValueError, KeyError):
            raise ConfigError(f"unknown model kind {kind!r}", field="model") from None

        if input_dim < 1:
            raise ConfigError(f"must be positive, got {input_dim}", field="dim")
        if hidden < 1:
            raise ConfigError(f"must be positive, got {hidden}", field="hidden")

        self.input_dim, self.hidden = input_dim, hidden
        self.layer_spec = layer_spec_for(self.kind, input_dim, hidden)

        size = self.layer_spec[-1].stop
        self.params = np.zeros(size, dtype=np.float64) if params is None else np.array(params, dtype=np.float64)
        if self.params.shape != (size,):
            raise ConfigError(f"expected {size} parameters, got {self.params.shape}", field="params")

    @classmethod
    def initialize(cls, kind: Union[ModelKind, str], input_dim: int, seed: int, hidden: int = 16) -> Model:
        """Zero weights for the linear kinds; scaled Gaussian weights for the hidden layer of the MLP."""
        model = cls(kind=kind, input_dim=input_dim, hidden=hidden)
        if model.kind == ModelKind.MLP_2LAYER:
            rng = np.random.default_rng(seed)
            model.params = np.zeros(model.size)
            model._write(model.params, "hidden.weight", rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=hidden * input_dim))
            model._write(model.params, "output.weight", rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden))
        return model

    @property
    def size(self) -> int:
        return self.params.shape[0]

    @property
    def is_classifier(self) -> bool:
        return self.kind != ModelKind.LINEAR_REGRESSION

    def slice(self, name: str) -> LayerSlice:
        for layer in self.layer_spec:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def with_params(self, params: np.ndarray) -> Model:
        return type(self)(kind=self.kind, input_dim=self.input_dim, params=params, hidden=self.hidden)

    def split(self, vector: np.ndarray) -> list[np.ndarray]:
        """Copies of the per-layer slices of a parameter-shaped vector, in layer_spec order."""
        self._check_length(vector)
        return [layer.of(vector).copy() for layer in self.layer_spec]

    def join(self, parts: list[np.ndarray]) -> np.ndarray:
        if len(parts) != len(self.layer_spec):
            raise InternalError(f"expected {len(self.layer_spec)} layer slices, got {len(parts)}")
        return np.concatenate([np.asarray(part, dtype=np.float64) for part in parts])

    def logits(self, features: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        params = self.params if params is None else params
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise ConfigError(f"feature dimension {features.shape[-1]} does not match model input dimension {self.input_dim}", field="dim")

        if self.kind == ModelKind.MLP_2LAYER:
            hidden = np.tanh(features @ self._hidden_weight(params).T + self.slice("hidden.bias").of(params))
            return hidden @ self.slice("output.weight").of(params) + self.slice("output.bias").of(params)[0]

        return features @ self.slice("weight").of(params) + self.slice("bias").of(params)[0]

    def forward_loss(self, batch: Minibatch) -> float:
        z = self.logits(batch.features)
        if self.kind == ModelKind.LINEAR_REGRESSION:
            loss = 0.5 * np.mean((z - batch.labels) ** 2)
        else:
            loss = np.mean(np.logaddexp(0.0, z) - batch.labels * z)

        if not np.isfinite(loss):
            raise InternalError(f"non-finite loss from {self.kind.value}")
        return float(loss)

    def backward_grad(self, batch: Minibatch) -> np.ndarray:
        features, labels, size = batch.features, batch.labels, batch.batch_size
        grad = np.zeros_like(self.params)

        if self.kind == ModelKind.MLP_2LAYER:
            weight = self._hidden_weight(self.params)
            if features.ndim != 2 or features.shape[1] != self.input_dim:
                raise ConfigError(f"feature dimension {features.shape[-1]} does not match model input dimension {self.input_dim}", field="dim")

            hidden = np.tanh(features @ weight.T + self.slice("hidden.bias").of(self.params))
            output_weight = self.slice("output.weight").of(self.params)
            residual = (sigmoid(hidden @ output_weight + self.slice("output.bias").of(self.params)[0]) - labels) / size
            pre_activation = np.outer(residual, output_weight) * (1.0 - hidden ** 2)

            self._write(grad, "hidden.weight", (pre_activation.T @ features).ravel())
            self._write(grad, "hidden.bias", pre_activation.sum(axis=0))
            self._write(grad, "output.weight", hidden.T @ residual)
            self._write(grad, "output.bias", np.array([residual.sum()]))
        else:
            z = self.logits(features)
            residual = (z - labels if self.kind == ModelKind.LINEAR_REGRESSION else sigmoid(z) - labels) / size
            self._write(grad, "weight", features.T @ residual)
            self._write(grad, "bias", np.array([residual.sum()]))

        if not np.all(np.isfinite(grad)):
            raise InternalError(f"non-finite gradient from {self.kind.value}")
        return grad

    def predict(self, features: np.ndarray) -> np.ndarray:
        z = self.logits(features)
        return (z > 0.0).astype(np.float64) if self.is_classifier else z

    def accuracy(self, batch: Minibatch) -> float:
        """Fraction of correct labels for classifiers; fraction of matching signs for regression."""
        if self.is_classifier:
            return float(np.mean(self.predict(batch.features) == batch.labels))
        return float(np.mean(np.sign(self.predict(batch.features)) == np.sign(batch.labels)))

    def _hidden_weight(self, params: np.ndarray) -> np.ndarray:
        return self.slice("hidden.weight").of(params).reshape(self.hidden, self.input_dim)

    def _write(self, target: np.ndarray, name: str, values: np.ndarray) -> None:
        layer = self.slice(name)
        target[layer.offset:layer.stop] = values

    def _check_length(self, vector: np.ndarray) -> None:
        if vector.shape != (self.size,):
            raise InternalError(f"vector of shape {vector.shape} does not match {self.size} parameters")


def forward_loss(model: Model, batch: Minibatch) -> float:
    return model.forward_loss(batch)


def backward_grad(model: Model, batch: Minibatch) -> np.ndarray:
    return model.backward_grad(batch)
