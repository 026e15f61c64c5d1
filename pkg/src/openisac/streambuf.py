"""Amortized-O(1) append buffer for complex sample streams.

Chunks accumulate in a list and are only coalesced when a read crosses
them, so per-sample feeding stays linear overall.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class SampleBuffer:
    def __init__(self):
        self._chunks = deque()
        self._offset = 0       # consumed samples within the head chunk
        self._size = 0

    def __len__(self):
        return self._size

    def append(self, samples):
        samples = np.asarray(samples, np.complex128)
        if len(samples):
            self._chunks.append(samples)
            self._size += len(samples)

    def take(self, count: int) -> np.ndarray:
        """Remove and return the first ``count`` samples."""
        if count > self._size:
            raise ValueError(f"take({count}) from buffer of {self._size}")
        out = np.empty(count, np.complex128)
        pos = 0
        while pos < count:
            head = self._chunks[0]
            avail = len(head) - self._offset
            need = count - pos
            if avail <= need:
                out[pos:pos + avail] = head[self._offset:]
                self._chunks.popleft()
                self._offset = 0
                pos += avail
            else:
                out[pos:pos + need] = head[self._offset:self._offset + need]
                self._offset += need
                pos += need
        self._size -= count
        return out

    def peek(self, count: int) -> np.ndarray:
        """Return the first ``count`` samples without consuming them."""
        if count > self._size:
            raise ValueError(f"peek({count}) from buffer of {self._size}")
        out = np.empty(count, np.complex128)
        pos = 0
        offset = self._offset
        for chunk in self._chunks:
            if pos >= count:
                break
            seg = chunk[offset:]
            take = min(len(seg), count - pos)
            out[pos:pos + take] = seg[:take]
            pos += take
            offset = 0
        return out

    def drop(self, count: int):
        if count > self._size:
            raise ValueError(f"drop({count}) from buffer of {self._size}")
        remaining = count
        while remaining:
            head = self._chunks[0]
            avail = len(head) - self._offset
            if avail <= remaining:
                self._chunks.popleft()
                self._offset = 0
                remaining -= avail
            else:
                self._offset += remaining
                remaining = 0
        self._size -= count
