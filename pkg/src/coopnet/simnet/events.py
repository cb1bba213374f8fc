"""Deterministic event queue and named random streams."""
from __future__ import annotations

import hashlib
import heapq
import random
from typing import Any, Callable


def derive_seed(master_seed: int, *labels) -> int:
    """64-bit seed for the stream named by ``labels`` under ``master_seed``."""
    text = "/".join(str(x) for x in (master_seed, *labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


def stream(master_seed: int, *labels) -> random.Random:
    return random.Random(derive_seed(master_seed, *labels))


class EventQueue:
    """Events ordered by (time, insertion sequence)."""

    def __init__(self):
        self._heap: list[tuple[float, int, Callable, tuple]] = []
        self._seq = 0
        self.now = 0.0
        self.processed = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, delay: float, fn: Callable, *args: Any) -> None:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        self.schedule_at(self.now + delay, fn, *args)

    def schedule_at(self, when: float, fn: Callable, *args: Any) -> None:
        if when < self.now:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._heap, (when, self._seq, fn, args))
        self._seq += 1

    def run(self, until: float = float("inf")) -> None:
        """Execute events until the queue drains or the next one is after ``until``."""
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= until:
            when, _, fn, args = pop(heap)
            self.now = when
            self.processed += 1
            fn(*args)
        if until != float("inf") and until > self.now:
            self.now = until


def schedule(queue: EventQueue, delay: float, fn: Callable, *args: Any) -> None:
    queue.schedule(delay, fn, *args)


def run(queue: EventQueue, until: float = float("inf")) -> None:
    queue.run(until)
