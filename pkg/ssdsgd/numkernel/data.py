from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import ConfigError
from ..mixin import ReprMixin
from .model import Minibatch, ModelKind

logger = logging.getLogger(__name__)


class Dataset(ReprMixin):
    """Features and labels held as float64 arrays, with the kind of model they were generated for."""

    def __init__(self, kind: ModelKind, features: np.ndarray, labels: np.ndarray, noise: float = 0.0) -> None:
        self.kind, self.features, self.labels, self.noise = ModelKind(kind), features, labels, noise

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def batch(self, indices: np.ndarray = None) -> Minibatch:
        if indices is None:
            return Minibatch(self.features, self.labels)
        return Minibatch(self.features[indices], self.labels[indices])

    def split(self, eval_fraction: float) -> tuple[Dataset, Dataset]:
        """Deterministic head/tail split: the rows are already in random order."""
        if not 0.0 < eval_fraction < 1.0:
            raise ConfigError(f"must lie strictly between 0 and 1, got {eval_fraction}", field="eval_fraction")

        cut = len(self) - max(1, int(round(len(self) * eval_fraction)))
        if cut < 1:
            raise ConfigError(f"{len(self)} samples leave no training rows", field="n_samples")

        return (
            Dataset(self.kind, self.features[:cut], self.labels[:cut], self.noise),
            Dataset(self.kind, self.features[cut:], self.labels[cut:], self.noise),
        )

    def shard(self, worker_id: int, num_workers: int) -> np.ndarray:
        """Row indices owned by one worker: round-robin over the rows."""
        return np.arange(worker_id, len(self), num_workers)


@dataclass(frozen=True)
class DatasetSpec:
    kind: ModelKind
    n_samples: int = 4096
    dim: int = 32
    noise: float = 0.05
    seed: int = 0

    def make(self) -> Dataset:
        return make_synthetic(kind=self.kind, n_samples=self.n_samples, dim=self.dim, seed=self.seed, noise=self.noise)


def make_synthetic(kind: Union[ModelKind, str], n_samples: int, dim: int, seed: int, noise: float = 0.05, hidden: int = 8) -> Dataset:
    """
    Gaussian features with labels from a hidden ground truth. Regression targets get Gaussian noise of scale 'noise';
    classification labels come from a hidden separator (a linear one, or a small tanh network for the MLP kind) and are flipped at rate 'noise'.
    """
    kind = ModelKind(kind)
    if n_samples < 1:
        raise ConfigError(f"must be positive, got {n_samples}", field="n_samples")
    if dim < 1:
        raise ConfigError(f"must be positive, got {dim}", field="dim")
    if noise < 0.0 or (kind != ModelKind.LINEAR_REGRESSION and noise > 1.0):
        raise ConfigError(f"out of range: {noise}", field="noise")

    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n_samples, dim))
    truth = rng.normal(size=dim) / np.sqrt(dim)

    if kind == ModelKind.LINEAR_REGRESSION:
        labels = features @ truth + 0.5 + noise * rng.normal(size=n_samples)
    else:
        if kind == ModelKind.MLP_2LAYER:
            mixing = rng.normal(size=(dim, hidden)) / np.sqrt(dim)
            score = np.tanh(features @ mixing) @ rng.normal(size=hidden)
        else:
            score = features @ truth

        labels = (score > 0.0).astype(np.float64)
        flips = rng.random(n_samples) < noise
        labels[flips] = 1.0 - labels[flips]

    logger.debug("Generated %d %s samples of dimension %d (seed=%d, noise=%g).", n_samples, kind.value, dim, seed, noise)
    return Dataset(kind=kind, features=features, labels=labels, noise=noise)


class BatchStream:
    """
    Endless minibatches over a fixed set of rows. Each pass visits the rows in a fresh permutation drawn from the stream's own generator,
    so a stream is reproducible from (rows, batch_size, generator seed) alone.
    """

    def __init__(self, dataset: Dataset, rows: np.ndarray, batch_size: int, rng: np.random.Generator) -> None:
        if batch_size < 1:
            raise ConfigError(f"must be positive, got {batch_size}", field="batch_size")
        if not len(rows):
            raise ConfigError("a worker was assigned no rows; use fewer workers or more samples", field="workers")

        self.dataset, self.rows, self.batch_size, self.rng = dataset, rows, batch_size, rng
        self._pending = np.empty(0, dtype=np.int64)

    def __iter__(self) -> BatchStream:
        return self

    def __next__(self) -> Minibatch:
        while len(self._pending) < self.batch_size:
            self._pending = np.concatenate([self._pending, self.rng.permutation(self.rows)])

        chosen, self._pending = self._pending[:self.batch_size], self._pending[self.batch_size:]
        return self.dataset.batch(chosen)
