from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Iterator

import pyinstrument
from pathmagic import File, PathLike

logger = logging.getLogger(__name__)


class Profiler(pyinstrument.Profiler):
    """Samples the call stack of one command-line run. str() is the plain-text call tree of the last session."""

    def __str__(self) -> str:
        return self.output_text(unicode=True, color=False)

    def write_report(self, path: PathLike) -> File:
        file = File.from_pathlike(path)
        with open(file, "w") as stream:
            stream.write(str(self))
        return file

    @contextmanager
    def session(self, report: PathLike) -> Iterator[Profiler]:
        """Profile the body and write the call tree to 'report' on the way out, even when the body raises."""
        self.start()
        try:
            yield self
        finally:
            self.stop()
            logger.info("CPU profile written to %s.", self.write_report(report))
