"""Discrete-event queue."""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable


class EventQueue:
    """Events ordered by time, then insertion order.

    With ``shuffle_rng`` set, simultaneous events are ordered by a random
    key instead; the fuzzing harness uses this to explore tie orders.
    """

    def __init__(self, shuffle_rng=None):
        self._heap: list = []
        self._seq = itertools.count()
        self._rng = shuffle_rng
        self.executed = 0

    def push(self, time: int, fn: Callable, *args: Any) -> None:
        tie = float(self._rng.random()) if self._rng is not None else 0.0
        heapq.heappush(self._heap, (time, tie, next(self._seq), fn, args))

    def pop(self) -> tuple[int, Callable, tuple]:
        time, _, _, fn, args = heapq.heappop(self._heap)
        self.executed += 1
        return time, fn, args

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)
