from __future__ import annotations

import enum
import heapq
from collections import Counter
from dataclasses import dataclass
from typing import Any


class EventKind(enum.Enum):
    FRAME_ARRIVAL = "FrameArrival"
    TX_START = "TxStart"
    TX_END = "TxEnd"
    BACKOFF_EXPIRY = "BackoffExpiry"
    STATE_CHANGE = "StateChange"
    BEACON_DUE = "BeaconDue"
    TIMER = "Timer"


@dataclass(frozen=True)
class Event:
    time: int  # ns
    seq: int
    target: str
    kind: EventKind
    data: Any = None


class EventQueue:
    """Min-heap of events ordered by (time, insertion sequence)."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.counts = Counter()

    def push(self, time: int, target: str, kind: EventKind, data=None) -> Event:
        ev = Event(time, self._seq, target, kind, data)
        self._seq += 1
        heapq.heappush(self._heap, (time, ev.seq, ev))
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)[2]
        self.counts[ev.kind.value] += 1
        return ev

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def __len__(self):
        return len(self._heap)
