from __future__ import annotations

from typing import Any

import numpy as np


def _summarize(value: Any) -> str:
    if isinstance(value, np.ndarray):
        return f"<{value.dtype}[{', '.join(str(dim) for dim in value.shape)}]>"
    return repr(value)


class ReprMixin:
    """Repr built from the public attributes, with arrays shown by dtype and shape only."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join([f'{attr}={_summarize(val)}' for attr, val in self.__dict__.items() if not attr.startswith('_')])})"

