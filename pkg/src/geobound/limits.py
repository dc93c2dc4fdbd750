"""Resource guards shared by the analysis stages."""

from __future__ import annotations

import time


class ResourceLimitError(RuntimeError):
    """Raised when an intermediate distribution outgrows the configured box volume."""


class AnalysisTimeout(RuntimeError):
    """Raised cooperatively when a :class:`Deadline` expires."""


class Deadline:
    """Wall-clock budget checked at loop boundaries; ``None`` seconds means unlimited."""

    def __init__(self, seconds: float | None = None):
        self.seconds = seconds
        self.start = time.monotonic()

    @property
    def expired(self) -> bool:
        return self.seconds is not None and time.monotonic() - self.start > self.seconds

    def check(self) -> None:
        if self.expired:
            raise AnalysisTimeout(f"time budget of {self.seconds} s exhausted")

    def elapsed(self) -> float:
        return time.monotonic() - self.start


NO_DEADLINE = Deadline(None)
