from __future__ import annotations

import json
import logging
import os
from typing import Any, Union

import numpy as np
from pathmagic import File, PathLike

from ..errors import ProfileError
from ..mixin import ReprMixin

logger = logging.getLogger(__name__)

LAYER_FIELDS = ("backward", "send", "receive", "sync", "update", "local")


class TimingProfile(ReprMixin):
    """
    Per-layer costs of one training iteration, in abstract time units. Index 0 is the first layer (nearest the input) and index -1 the last.

    backward: backward-propagation time of each layer
    send: push time; receive: pull time; sync: synchronization wait at the server; update: server update time
    local: local-update time on the worker
    forward: forward-propagation time of the whole model
    """

    def __init__(self, forward: float, backward: Any, send: Any, receive: Any, sync: Any, update: Any, local: Any) -> None:
        self.forward = float(forward)
        self.backward, self.send, self.receive, self.sync, self.update, self.local = (
            np.array(values, dtype=np.float64).reshape(-1) for values in (backward, send, receive, sync, update, local)
        )
        self.validate()

    def validate(self) -> TimingProfile:
        layers = self.backward.shape[0]
        if layers < 1:
            raise ProfileError("a profile needs at least one layer", field="backward")

        for name in LAYER_FIELDS:
            values = getattr(self, name)
            if values.shape[0] != layers:
                raise ProfileError(f"expected {layers} per-layer values, got {values.shape[0]}", field=name)
            if not np.all(np.isfinite(values)) or np.any(values < 0.0):
                raise ProfileError("per-layer costs must be finite and non-negative", field=name)

        if not (np.isfinite(self.forward) and self.forward >= 0.0):
            raise ProfileError(f"must be finite and non-negative, got {self.forward}", field="forward")

        return self

    @property
    def layers(self) -> int:
        return self.backward.shape[0]

    @property
    def comm(self) -> np.ndarray:
        """Per-layer communication cost: send + receive + sync + update."""
        return self.send + self.receive + self.sync + self.update

    @property
    def backward_total(self) -> float:
        return float(self.backward.sum())

    @property
    def comm_total(self) -> float:
        return float(self.comm.sum())

    @property
    def send_total(self) -> float:
        return float(self.send.sum())

    @property
    def compute_total(self) -> float:
        """forward + backward + the first layer's local update: one delay-stage iteration without communication."""
        return self.forward + self.backward_total + float(self.local[0])

    def replace(self, **changes: Any) -> TimingProfile:
        values = self.as_dict()
        values.update(changes)
        return type(self)(**values)

    def as_dict(self) -> dict[str, Any]:
        return {"forward": self.forward, **{name: getattr(self, name).tolist() for name in LAYER_FIELDS}}

    def save(self, path: PathLike) -> File:
        file = File.from_pathlike(path)
        with open(file, "w") as stream:
            json.dump(self.as_dict(), stream, indent=2)
        return file

    @classmethod
    def load(cls, path: PathLike) -> TimingProfile:
        if not os.path.isfile(path):
            raise ProfileError(f"no such file: {path}", field="profile")

        try:
            with open(File.from_pathlike(path)) as stream:
                raw = json.load(stream)
        except OSError as ex:
            raise ProfileError(f"cannot read profile: {ex}", field="profile") from ex
        except json.JSONDecodeError as ex:
            raise ProfileError(f"not valid JSON: {ex}", field="profile") from ex

        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Any) -> TimingProfile:
        if not isinstance(raw, dict):
            raise ProfileError("expected a JSON object", field="profile")

        expected = {"forward", *LAYER_FIELDS}
        if missing := expected - set(raw):
            raise ProfileError(f"missing keys: {', '.join(sorted(missing))}", field="profile")
        if unknown := set(raw) - expected:
            raise ProfileError(f"unknown keys: {', '.join(sorted(unknown))}", field="profile")

        try:
            return cls(**raw)
        except (TypeError, ValueError) as ex:
            raise ProfileError(f"malformed values: {ex}", field="profile") from ex


def absorb_bubbles(profile: TimingProfile) -> TimingProfile:
    """
    Fold the idle gaps of a synchronous iteration's communication link into the cost of the layer sent just before each gap.
    The gap lands in 'sync', so the send total is unchanged. The link serves layers from last to first, each once its backward pass is done.
    """
    sync = profile.sync.copy()
    backward_done = profile.forward + np.cumsum(profile.backward[::-1])[::-1]
    link_free = None
    for layer in reversed(range(profile.layers)):
        start = backward_done[layer] if link_free is None else max(link_free, backward_done[layer])
        if link_free is not None and start > link_free:
            sync[layer + 1] += start - link_free
        link_free = start + profile.comm[layer]

    return profile.replace(sync=sync)


def _split_comm(rng: np.random.Generator, totals: np.ndarray, send_share: Union[float, np.ndarray]) -> dict[str, np.ndarray]:
    send = totals * send_share
    rest = totals - send
    weights = rng.dirichlet(np.ones(3), size=totals.shape[0])
    return {"send": send, "sync": rest * weights[:, 0], "update": rest * weights[:, 1], "receive": rest * weights[:, 2]}


def compute_bound_profile(rng: np.random.Generator, layers: int) -> TimingProfile:
    """The link always finishes a layer before the next backward pass completes: no bubbles, compute-bound synchronous iteration."""
    backward = rng.uniform(1.0, 2.0, size=layers)
    comm = np.empty(layers)
    comm[0] = rng.uniform(0.1, 2.0)
    comm[1:] = backward[:-1] * rng.uniform(0.1, 0.9, size=layers - 1)
    return TimingProfile(forward=rng.uniform(0.5, 2.0), backward=backward, local=rng.uniform(0.05, 0.3, size=layers),
                         **_split_comm(rng, comm, rng.uniform(0.2, 0.5, size=layers)))


def comm_bound_profile(rng: np.random.Generator, layers: int) -> TimingProfile:
    """The link never idles once the last layer's backward pass is done: no bubbles, communication-bound synchronous iteration."""
    backward = rng.uniform(0.5, 1.5, size=layers)
    comm = np.empty(layers)
    comm[0] = rng.uniform(0.5, 2.0)
    comm[1:] = backward[:-1] * rng.uniform(1.0, 3.0, size=layers - 1)
    return TimingProfile(forward=rng.uniform(0.5, 2.0), backward=backward, local=rng.uniform(0.05, 0.3, size=layers),
                         **_split_comm(rng, comm, rng.uniform(0.2, 0.5, size=layers)))


def delay_regime_profile(rng: np.random.Generator, layers: int, send_bound: bool) -> TimingProfile:
    """
    A profile whose backward time sits almost entirely in the last layer and whose communication dominates computation.
    With send_bound=False one iteration's pushes fit inside its computation; with send_bound=True they do not.
    """
    forward, last_backward, first_local = rng.uniform(1.0, 2.0), rng.uniform(1.0, 2.0), rng.uniform(0.2, 0.5)
    compute = forward + last_backward + first_local

    send_total = compute * (rng.uniform(1.1, 1.5) if send_bound else rng.uniform(0.05, 0.3))
    comm_total = send_total + compute * (rng.uniform(1.0, 3.0) if send_bound else rng.uniform(3.0, 6.0))
    backward = np.full(layers, 1e-3 * comm_total / layers)
    backward[-1] = last_backward
    parts = _split_comm(rng, (comm_total - send_total) * _shares(rng, layers), 0.0)
    parts["send"] = send_total * _shares(rng, layers)

    local = rng.uniform(0.01, 0.1, size=layers)
    local[0] = first_local
    return TimingProfile(forward=forward, backward=backward, local=local, **parts)


def _shares(rng: np.random.Generator, layers: int) -> np.ndarray:
    """Random fractions summing to one, none below half an even share."""
    return 0.5 / layers + 0.5 * rng.dirichlet(np.ones(layers))


def random_profile(rng: np.random.Generator, layers: int) -> TimingProfile:
    """Every cost drawn independently, so bubbles, spread-out backward passes and either bottleneck all occur."""
    return TimingProfile(
        forward=rng.uniform(0.1, 3.0), backward=rng.uniform(0.0, 2.0, size=layers), send=rng.uniform(0.0, 2.0, size=layers),
        receive=rng.uniform(0.0, 1.0, size=layers), sync=rng.uniform(0.0, 1.0, size=layers), update=rng.uniform(0.0, 0.5, size=layers),
        local=rng.uniform(0.0, 0.3, size=layers),
    )
