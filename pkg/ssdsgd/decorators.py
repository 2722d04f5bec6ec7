from __future__ import annotations

import logging
import time
from typing import Callable, Type

from wrapt import decorator

from .classes import Timer
from .errors import TransportTimeout
from .functions import class_name, stringify_exception

logger = logging.getLogger(__name__)


def with_retries(attempts: int, retry_delay: float = 0.0, retry_on: Type[Exception] = TransportTimeout) -> Callable:
    """Retry the wrapped call up to 'attempts' times while it raises 'retry_on', then raise TransportTimeout."""
    if attempts < 1:
        raise ValueError(f"attempts must be positive, got {attempts}")

    @decorator
    def wrapper(func, instance, args, kwargs):
        timer = Timer()
        for attempt in range(1, attempts + 1):
            try:
                return func(*args, **kwargs)
            except retry_on as ex:
                if attempt == attempts:
                    raise TransportTimeout(f"{func.__name__} failed after {attempts} attempts ({timer}s): {ex}") from ex

                logger.debug("%s attempt %d/%d failed: %s", func.__name__, attempt, attempts, ex)
                if retry_delay:
                    time.sleep(retry_delay)
    return wrapper


def exit_codes(codes: dict[Type[BaseException], int]) -> Callable:
    """Turn the listed exceptions raised by the wrapped entry point into exit codes (first matching type wins). Success returns 0."""
    @decorator
    def wrapper(func, instance, args, kwargs):
        try:
            result = func(*args, **kwargs)
        except tuple(codes) as ex:
            for kind, code in codes.items():
                if isinstance(ex, kind):
                    logger.error("%s: %s", class_name(ex), ex)
                    logger.debug("Exit code %d for:\n%s", code, stringify_exception(ex))
                    return code
            raise
        return 0 if result is None else result
    return wrapper
