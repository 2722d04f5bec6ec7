from __future__ import annotations

from typing import Optional


class SsdSgdError(Exception):
    """Root of every error raised by this package."""


class ConfigError(SsdSgdError):
    """Invalid configuration. Carries the name of the offending field when there is one."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field is not None else message)


class ProfileError(ConfigError):
    """Malformed timing profile."""


class InternalError(SsdSgdError):
    """An invariant the runtime itself is responsible for has been broken."""


class ProtocolError(SsdSgdError):
    """A message violated the push/pull protocol (duplicate push, bad frame, missing reply)."""


class TransportTimeout(SsdSgdError):
    """A reply did not arrive within the allowed number of attempts."""
