from __future__ import annotations

import traceback
from typing import Any

import numpy as np


def class_name(candidate: Any) -> str:
    cls = candidate if isinstance(candidate, type) else type(candidate)
    return cls.__name__


def stringify_exception(ex: BaseException) -> str:
    return "".join(traceback.format_exception(type(ex), ex, ex.__traceback__))


def split_seed(master: int) -> tuple[int, int, int]:
    """Fan a master seed out into (dataset, init, scheduler) seeds. Changing one child never perturbs the others' streams."""
    dataset, init, scheduler = np.random.SeedSequence(master).spawn(3)
    return tuple(int(child.generate_state(1, dtype=np.uint32)[0]) for child in (dataset, init, scheduler))


def worker_rng(scheduler_seed: int, worker_id: int) -> np.random.Generator:
    return np.random.default_rng([scheduler_seed, worker_id])


def relative_error(actual: Any, expected: Any) -> float:
    """Norm-based relative error, safe when both sides are zero."""
    actual, expected = np.asarray(actual, dtype=np.float64), np.asarray(expected, dtype=np.float64)
    scale = max(np.linalg.norm(actual), np.linalg.norm(expected))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(actual - expected) / scale)


def ceil_div(numerator: int, denominator: int) -> int:
    return -(-numerator // denominator)


def parse_int_range(text: str) -> list[int]:
    """Parse 'a..b' (inclusive) or a comma-separated list of integers."""
    text = text.strip()
    if ".." in text:
        low, high = (int(part) for part in text.split("..", 1))
        if high < low:
            raise ValueError(f"empty range {text!r}")
        return list(range(low, high + 1))

    return [int(part) for part in text.split(",") if part.strip()]
