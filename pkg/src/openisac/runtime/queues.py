"""Bounded FIFO queues connecting pipeline stages.

Two overflow policies: ``block_producer`` (back-pressure, nothing is ever
lost) and ``drop_oldest`` (the producer never waits; old items fall out,
emulating a radio source that cannot pause).  Closing a queue lets
consumers drain the remainder and then receive ``CLOSED``.
"""

from __future__ import annotations

import threading
from collections import deque

CLOSED = object()


class BoundedQueue:
    def __init__(self, capacity: int, policy: str = "block_producer"):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if policy not in ("block_producer", "drop_oldest"):
            raise ValueError(f"unknown policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self._items = deque()
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._not_full = threading.Condition(self._lock)
        self._closed = False
        self.drops = 0
        self.total_in = 0
        self.total_out = 0

    def put(self, item, timeout=None) -> bool:
        """Enqueue; blocks under back-pressure.  False if closed or timed out."""
        with self._lock:
            if self._closed:
                return False
            if self.policy == "drop_oldest":
                if len(self._items) >= self.capacity:
                    self._items.popleft()
                    self.drops += 1
                self._items.append(item)
                self.total_in += 1
                self._not_empty.notify()
                return True
            while len(self._items) >= self.capacity:
                if not self._not_full.wait(timeout):
                    return False
                if self._closed:
                    return False
            self._items.append(item)
            self.total_in += 1
            self._not_empty.notify()
            return True

    def get(self, timeout=None):
        """Dequeue; returns CLOSED once the queue is closed and drained."""
        with self._lock:
            while not self._items:
                if self._closed:
                    return CLOSED
                if not self._not_empty.wait(timeout):
                    return CLOSED if self._closed else None
            item = self._items.popleft()
            self.total_out += 1
            self._not_full.notify()
            return item

    def close(self):
        with self._lock:
            self._closed = True
            self._not_empty.notify_all()
            self._not_full.notify_all()

    def depth(self) -> int:
        with self._lock:
            return len(self._items)

    @property
    def closed(self):
        return self._closed
