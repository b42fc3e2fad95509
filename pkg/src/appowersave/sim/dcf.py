"""Per-device DCF backoff bookkeeping.

Counters are not decremented slot by slot. A counting device remembers the
instant its countdown (re)started; the remaining slots are settled whenever
the countdown is interrupted, so only backoff *expiries* become events.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional


@dataclass
class DcfState:
    cw: int
    cwmin: int
    cwmax: int
    in_bss: bool = True
    backoff_slots: Optional[int] = None
    frozen: bool = False
    blocked: bool = False
    count_start: Optional[int] = None  # ns; countdown reference while counting
    retries: int = 0

    @property
    def counting(self) -> bool:
        return self.count_start is not None

    def expiry(self, slot: int) -> Optional[int]:
        if self.count_start is None:
            return None
        return self.count_start + self.backoff_slots * slot

    def draw(self, rng: random.Random) -> None:
        self.backoff_slots = rng.randint(0, self.cw)

    def settle(self, now: int, slot: int) -> None:
        """Stop counting at ``now``, keeping the slots not yet consumed."""
        if self.count_start is None:
            return
        if now > self.count_start:
            done = (now - self.count_start) // slot
            self.backoff_slots -= min(done, self.backoff_slots)
        self.count_start = None

    def resume(self, at: int) -> None:
        if self.backoff_slots is not None and not self.frozen and not self.blocked:
            self.count_start = at

    def on_success(self) -> None:
        self.cw = self.cwmin
        self.retries = 0
        self.backoff_slots = None

    def on_failure(self, retry_limit: int) -> bool:
        """Double the window; returns True when the frame must be dropped."""
        self.retries += 1
        self.backoff_slots = None
        if self.retries > retry_limit:
            self.cw, self.retries = self.cwmin, 0
            return True
        self.cw = min(2 * (self.cw + 1) - 1, self.cwmax)
        return False


def freeze_backoffs(states: Iterable[DcfState], now: int, slot: int, obss_freeze: bool = False) -> list:
    """Freeze counters because the AP enters Doze.

    In-BSS devices always freeze; devices of overlapping BSSs only when
    ``obss_freeze`` is set. Returns the frozen ones.
    """
    out = []
    for s in states:
        if s.in_bss or (not s.in_bss and obss_freeze):
            s.settle(now, slot)
            s.frozen = True
            out.append(s)
    return out


def thaw_backoffs(states: Iterable[DcfState], resume_at: Optional[int]) -> None:
    """Release frozen counters; they resume from ``resume_at`` if the medium is idle."""
    for s in states:
        if s.frozen:
            s.frozen = False
            if resume_at is not None:
                s.resume(resume_at)
