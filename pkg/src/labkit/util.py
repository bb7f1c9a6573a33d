"""Small shared helpers: sample grids and clocks."""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone


def grid(start: float, stop: float, n: int) -> list[float]:
    """``n`` equidistant samples from ``start`` to ``stop`` inclusive.

    Point k is start + k*(stop-start)/(n-1); the endpoints are forced to
    the exact input values. This is the one sampling convention shared by
    scan lines, frequency sweeps and their test oracles.
    """
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    step = (stop - start) / (n - 1)
    points = [start + k * step for k in range(n)]
    points[0] = start
    points[-1] = stop
    return points


def iso_utc(dt: datetime) -> str:
    """UTC ISO-8601 with milliseconds and trailing Z."""
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


class Clock:
    """Wall clock. The recorder and logger only ever ask for `now()`."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock(Clock):
    """Deterministic clock for reproducible headless runs.

    Starts at a fixed epoch and advances by a fixed step on every call, so
    repeated runs produce identical timestamps and file names while saves
    within one run stay strictly ordered.
    """

    def __init__(self, start: datetime | None = None, step_s: float = 1.0):
        self._now = start or datetime(2000, 1, 1, tzinfo=timezone.utc)
        self._step = timedelta(seconds=step_s)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            current = self._now
            self._now = current + self._step
        return current
