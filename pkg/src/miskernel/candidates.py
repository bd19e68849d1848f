"""Candidate set for dependency checking and the shared stop signal."""

from __future__ import annotations

from collections import deque

import numpy as np

from .records import GLOBAL


class CandidateSet:
    """Set D of viable candidate vertices with one work queue per block.

    A vertex is in D at most once; membership is tracked in a flat flag
    array so pushes are O(1) and duplicate pushes are no-ops.
    """

    def __init__(self, capacity):
        self.in_d = np.zeros(capacity, dtype=np.uint8)
        self.queues = {}

    def grow(self, capacity):
        if capacity > self.in_d.size:
            self.in_d = np.concatenate(
                [self.in_d, np.zeros(capacity - self.in_d.size, dtype=np.uint8)])

    def push(self, v, block=GLOBAL):
        v = int(v)
        if not self.in_d[v]:
            self.in_d[v] = 1
            self.queues.setdefault(int(block), deque()).append(v)

    def pop(self, block=GLOBAL):
        """Next candidate of the block, or -1 when its queue is empty."""
        q = self.queues.get(int(block))
        if not q:
            return -1
        v = q.popleft()
        self.in_d[v] = 0
        return v

    def pending(self, block=GLOBAL):
        q = self.queues.get(int(block))
        return len(q) if q else 0

    def seed(self, vertices, block_of=None):
        if block_of is None:
            for v in vertices:
                self.push(int(v), GLOBAL)
        else:
            for v in vertices:
                self.push(int(v), int(block_of[int(v)]))

    def drain(self, block=GLOBAL):
        """Remove and return all queued candidates of the block."""
        q = self.queues.get(int(block))
        if not q:
            return []
        out = list(q)
        q.clear()
        for v in out:
            self.in_d[v] = 0
        return out

    def __contains__(self, v):
        return bool(self.in_d[int(v)])


class StopSignal:
    """Monotone stop flag, optionally backed by shared memory.

    Once raised it stays raised until the coordinator consumes it at the
    next phase barrier.
    """

    def __init__(self, buf=None):
        self._buf = buf if buf is not None else np.zeros(1, dtype=np.uint8)
        self.reason = None

    @property
    def raised(self):
        return bool(self._buf[0])

    def raise_(self, reason="external"):
        self._buf[0] = 1
        if self.reason is None:
            self.reason = reason

    def clear(self):
        self._buf[0] = 0
        self.reason = None
