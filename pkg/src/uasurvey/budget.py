"""Per-host load controls: request pacing, time and byte ceilings."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

# Added to every inter-request wait so that gaps measured on the server side
# stay above the configured delay despite loopback jitter.
PACING_SLACK = 0.002


class BudgetExceeded(Exception):
    """A per-host time or byte ceiling tripped; the probe must disconnect."""

    def __init__(self, which: str, detail: str = ""):
        super().__init__(f"{which} budget exceeded {detail}".rstrip())
        self.which = which


@dataclass(frozen=True)
class ScanBudget:
    """Load limits for one host.  Defaults: 500 ms gap, 60 min, 50 MB."""

    inter_request_delay: float = 0.5
    max_duration_per_host: float = 3600.0
    max_bytes_per_host: int = 50 * 1000 * 1000
    global_concurrency: int = 16

    def __post_init__(self):
        if self.inter_request_delay < 0 or self.max_duration_per_host < 0 or self.max_bytes_per_host < 0:
            raise ValueError("budget values must be non-negative")
        if self.global_concurrency < 1:
            raise ValueError("global_concurrency must be at least 1")


class BudgetTracker:
    """Live accounting for one probe.

    Every request goes through :meth:`before_request`, which sleeps until the
    pacing gap has elapsed and raises :class:`BudgetExceeded` if either
    ceiling has already been reached.  Checking *before* sending bounds the
    overshoot to one message.
    """

    def __init__(self, budget: ScanBudget, clock=time.monotonic, sleep=time.sleep):
        self.budget = budget
        self._clock = clock
        self._sleep = sleep
        self.started = clock()
        self.bytes_sent = 0
        self.requests = 0
        self.request_times: list[float] = []
        self._last_mark: float | None = None
        self.tripped: str | None = None
        self._lock = threading.Lock()

    def elapsed(self) -> float:
        return self._clock() - self.started

    def remaining_time(self) -> float:
        return max(0.0, self.budget.max_duration_per_host - self.elapsed())

    def check(self) -> None:
        if self.elapsed() >= self.budget.max_duration_per_host:
            self.tripped = "time"
            raise BudgetExceeded("time", f"after {self.elapsed():.3f}s")
        if self.bytes_sent >= self.budget.max_bytes_per_host:
            self.tripped = "bytes"
            raise BudgetExceeded("bytes", f"after {self.bytes_sent} bytes")

    def before_request(self) -> None:
        self.check()
        if self._last_mark is not None and self.budget.inter_request_delay > 0:
            due = self._last_mark + self.budget.inter_request_delay + PACING_SLACK
            wait = due - self._clock()
            if wait > 0:
                self._sleep(wait)
            self.check()
        now = self._clock()
        self.requests += 1
        self.request_times.append(now)
        self._last_mark = now

    def count_bytes(self, n: int) -> None:
        with self._lock:
            self.bytes_sent += n

    def mark_response(self) -> None:
        """Pace from the answer, not the question: the server logged the request before replying."""
        self._last_mark = self._clock()
