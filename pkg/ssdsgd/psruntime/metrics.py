from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional


@dataclass(frozen=True)
class MetricRecord:
    """One evaluation row. wall_time is the logical clock in deterministic runs, so identical seeds give identical rows."""
    iteration: int
    epoch: float
    train_loss: float
    eval_accuracy: float
    wall_time: float
    simulated_time: Optional[float]
    pushes: int
    pulls: int

    @classmethod
    def field_names(cls) -> list[str]:
        return [item.name for item in fields(cls)]
