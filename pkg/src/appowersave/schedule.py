"""Scheduled power save: AP state schedules, their element encoding,
change activation and Presence Requests.

Times are integer microseconds. A schedule maps every instant after its
epoch to one of the five AP power states through periodic interval groups;
where groups overlap the more available state wins.
"""

from __future__ import annotations

import bisect
import enum
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .codec import CorruptFrameError, pack_caps, unpack_caps
from .power import PowerState

SCHEDULE_ELEMENT_ID = 0xF4
MAX_GROUPS = 16
_U32 = 0xFFFFFFFF

CAPABLE_STATES = (PowerState.REDUCED_CAPABILITIES, PowerState.FULL_CAPABILITIES)


class BeforeEpochError(ValueError):
    pass


class StaleScheduleError(ValueError):
    pass


class StaleRequestError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalGroup:
    start_offset: int
    duration: int
    period: int
    target_state: PowerState
    capabilities: Optional[tuple] = None  # (bandwidth MHz, nss)
    one_shot: bool = False

    def covers(self, rel: int) -> bool:
        """Whether the group is active ``rel`` microseconds after the epoch."""
        phase = rel - self.start_offset
        if self.one_shot:
            return 0 <= phase < self.duration
        return phase % self.period < self.duration

    def windows(self, rel0: int, rel1: int):
        """(start, end) of every window overlapping [rel0, rel1), relative to the epoch."""
        if self.one_shot:
            s, e = self.start_offset, self.start_offset + self.duration
            if s < rel1 and e > rel0:
                yield s, e
            return
        k = (rel0 - self.start_offset) // self.period
        while True:
            s = self.start_offset + k * self.period
            if s >= rel1:
                return
            e = s + self.duration
            if e > rel0:
                yield s, e
            k += 1


@dataclass(frozen=True)
class PowerSchedule:
    epoch: int
    groups: tuple = ()
    default_state: PowerState = PowerState.FULL_CAPABILITIES
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    def bumped(self, groups: Optional[Sequence[IntervalGroup]] = None) -> "PowerSchedule":
        """Copy with the version advanced by one (and optionally new groups)."""
        return replace(
            self,
            groups=self.groups if groups is None else tuple(groups),
            version=self.version + 1,
        )

    @property
    def hyperperiod(self) -> int:
        periods = [g.period for g in self.groups if not g.one_shot]
        return math.lcm(*periods) if periods else 1


def _caps_rank(caps) -> int:
    return 0 if caps is None else caps[0] * caps[1]


def state_at(schedule: PowerSchedule, t: int):
    """(state, capabilities) of the AP at absolute time ``t``."""
    rel = t - schedule.epoch
    if rel < 0:
        raise BeforeEpochError(f"t={t} precedes schedule epoch {schedule.epoch}")
    best = None
    for g in schedule.groups:
        if g.covers(rel):
            key = (g.target_state, _caps_rank(g.capabilities))
            if best is None or key > best[0]:
                best = (key, g)
    if best is None:
        return schedule.default_state, None
    return best[1].target_state, best[1].capabilities


def segments(schedule: PowerSchedule, t0: int, t1: int):
    """Piecewise-constant (start, end, state, capabilities) covering [t0, t1)."""
    if t0 < schedule.epoch:
        raise BeforeEpochError(f"t={t0} precedes schedule epoch {schedule.epoch}")
    rel0, rel1 = t0 - schedule.epoch, t1 - schedule.epoch
    cuts = {rel0, rel1}
    for g in schedule.groups:
        for s, e in g.windows(rel0, rel1):
            if rel0 < s < rel1:
                cuts.add(s)
            if rel0 < e < rel1:
                cuts.add(e)
    edges = sorted(cuts)
    out = []
    for a, b in zip(edges, edges[1:]):
        state, caps = state_at(schedule, schedule.epoch + a)
        if out and out[-1][2] == state and out[-1][3] == caps:
            out[-1] = (out[-1][0], schedule.epoch + b, state, caps)
        else:
            out.append((schedule.epoch + a, schedule.epoch + b, state, caps))
    return out


@dataclass(frozen=True)
class Violation:
    group: Optional[int]
    message: str


def validate(schedule: PowerSchedule, has_legacy_sta: bool) -> list:
    """All rule breaches of ``schedule``; an empty list means it is usable."""
    out = []
    if has_legacy_sta and schedule.default_state is PowerState.DOZE:
        out.append(Violation(None, "default state is Doze while a legacy STA is associated"))
    if len(schedule.groups) > MAX_GROUPS:
        out.append(Violation(None, f"more than {MAX_GROUPS} interval groups"))
    for i, g in enumerate(schedule.groups):
        if g.duration <= 0:
            out.append(Violation(i, "duration must be positive"))
        if g.duration > g.period:
            out.append(Violation(i, f"duration {g.duration} exceeds period {g.period}"))
        if (g.capabilities is not None) != (g.target_state in CAPABLE_STATES):
            out.append(Violation(i, f"capabilities must be given exactly for capability states, not {g.target_state.name}"))
        if has_legacy_sta and g.target_state is PowerState.DOZE:
            out.append(Violation(i, "Doze interval while a legacy STA is associated"))
    return out


def beacon_conflicts(schedule: PowerSchedule, beacon_interval: int, t0: int, t1: int, beacon_epoch: int = 0):
    """Target beacon times in [t0, t1) at which the schedule leaves the AP unable to transmit."""
    k = max(0, -(-(t0 - beacon_epoch) // beacon_interval))
    out = []
    while (tbtt := beacon_epoch + k * beacon_interval) < t1:
        if tbtt >= schedule.epoch and not state_at(schedule, tbtt)[0].can_transmit:
            out.append(tbtt)
        k += 1
    return out


# --- schedule dissemination -------------------------------------------------

@dataclass(frozen=True)
class StaListen:
    """How an associated STA hears Beacons.

    ``listen_interval`` counts Beacon periods between wake-ups;
    ``last_wake_beacon`` is the index of the last Beacon it woke for (unknown
    means the worst phase is assumed). ``schedule_response_at`` is the time a
    Schedule Response reaches the STA, if it asked for one.
    """

    listen_interval: int = 1
    last_wake_beacon: Optional[int] = None
    schedule_response_at: Optional[int] = None
    legacy: bool = False


def next_beacon_index(now: int, beacon_interval: int, beacon_epoch: int = 0) -> int:
    return (now - beacon_epoch) // beacon_interval + 1


def informed_at(sta: StaListen, now: int, beacon_interval: int, beacon_epoch: int = 0) -> int:
    """Earliest time ``sta`` can hold a schedule advertised from ``now`` on."""
    k0 = next_beacon_index(now, beacon_interval, beacon_epoch)
    n = max(1, sta.listen_interval)
    if sta.last_wake_beacon is None:
        k = k0 + n - 1
    else:
        k = sta.last_wake_beacon + max(0, -(-(k0 - sta.last_wake_beacon) // n)) * n
    t = beacon_epoch + k * beacon_interval
    if sta.schedule_response_at is not None and sta.schedule_response_at >= now:
        t = min(t, sta.schedule_response_at)
    return t


def propose_change(
    current: PowerSchedule,
    new: PowerSchedule,
    sta_population: Sequence[StaListen],
    now: int,
    beacon_interval: int = 102_400,
    beacon_epoch: int = 0,
) -> int:
    """Earliest time the AP may switch from ``current`` to ``new``."""
    if new.version != current.version + 1:
        raise StaleScheduleError(
            f"new schedule version {new.version} does not follow {current.version}"
        )
    times = [informed_at(s, now, beacon_interval, beacon_epoch) for s in sta_population if not s.legacy]
    if not times:
        return beacon_epoch + next_beacon_index(now, beacon_interval, beacon_epoch) * beacon_interval
    return max(times)


class ScheduleTracker:
    """The AP's schedule history: what is active, and what Beacons advertise."""

    def __init__(self, schedule: PowerSchedule):
        self._starts = [schedule.epoch]
        self._schedules = [schedule]
        self.advertised = schedule

    @property
    def latest(self) -> PowerSchedule:
        return self._schedules[-1]

    def propose(self, new: PowerSchedule, stas: Sequence[StaListen], now: int,
                beacon_interval: int = 102_400, beacon_epoch: int = 0) -> int:
        activation = propose_change(self.latest, new, stas, now, beacon_interval, beacon_epoch)
        activation = max(activation, self._starts[-1])
        self._starts.append(activation)
        self._schedules.append(new)
        self.advertised = new
        return activation

    def active_at(self, t: int) -> PowerSchedule:
        i = bisect.bisect_right(self._starts, t) - 1
        return self._schedules[max(i, 0)]

    def state_at(self, t: int):
        return state_at(self.active_at(t), t)


# --- Presence Requests -----------------------------------------------------

class PresenceReason(enum.Enum):
    QOS = "QoS"
    GENERIC = "Generic"


@dataclass(frozen=True)
class PresenceRequest:
    sta_id: int
    requested_time: int
    requested_duration: int
    reason: PresenceReason = PresenceReason.QOS

    def __post_init__(self):
        if self.requested_duration <= 0:
            raise ValueError("requested_duration must be positive")


@dataclass(frozen=True)
class PresencePolicy:
    accept: bool = True
    qos_state: PowerState = PowerState.FULL_CAPABILITIES
    generic_state: PowerState = PowerState.INTERRUPTIBLE_LISTEN
    capabilities: tuple = (80, 2)


@dataclass(frozen=True)
class PresenceDecision:
    accepted: bool
    schedule: PowerSchedule


def handle_presence_request(schedule: PowerSchedule, req: PresenceRequest,
                            policy: PresencePolicy, now: int) -> PresenceDecision:
    if req.requested_time < now:
        raise StaleRequestError(f"request for t={req.requested_time} arrived at t={now}")
    if not policy.accept:
        return PresenceDecision(False, schedule)
    end = req.requested_time + req.requested_duration
    if all(st.awake for _, _, st, _ in segments(schedule, req.requested_time, end)):
        return PresenceDecision(True, schedule.bumped())
    state = policy.qos_state if req.reason is PresenceReason.QOS else policy.generic_state
    offset = req.requested_time - schedule.epoch
    if offset > _U32 or req.requested_duration > _U32:
        raise ValueError("presence window does not fit the schedule element")
    window = IntervalGroup(
        start_offset=offset,
        duration=req.requested_duration,
        period=req.requested_duration,
        target_state=state,
        capabilities=policy.capabilities if state in CAPABLE_STATES else None,
        one_shot=True,
    )
    return PresenceDecision(True, schedule.bumped(schedule.groups + (window,)))


# --- element codec -----------------------------------------------------------

_HEAD = struct.Struct("<BBHQB")
_GROUP = struct.Struct("<IIIBH")
_ONE_SHOT = 0x80


def encode_schedule(schedule: PowerSchedule) -> bytes:
    """Serialise to the Schedule element (little-endian)."""
    n = len(schedule.groups)
    if n > MAX_GROUPS:
        raise ValueError(f"at most {MAX_GROUPS} groups fit in one element")
    if not 0 <= schedule.version <= 0xFFFF:
        raise ValueError("version must fit in 16 bits")
    body = bytearray()
    for g in schedule.groups:
        caps = 0 if g.capabilities is None else pack_caps(*g.capabilities)
        state = int(g.target_state) | (_ONE_SHOT if g.one_shot else 0)
        body += _GROUP.pack(g.start_offset, g.duration, g.period, state, caps)
    # the count byte keeps the default state in its top three bits
    count = n | (int(schedule.default_state) << 5)
    head = _HEAD.pack(SCHEDULE_ELEMENT_ID, 0, schedule.version, schedule.epoch, count)
    length = len(head) - 2 + len(body)
    return bytes([SCHEDULE_ELEMENT_ID, length]) + head[2:] + bytes(body)


def decode_schedule(data: bytes) -> PowerSchedule:
    if len(data) < _HEAD.size:
        raise CorruptFrameError("schedule element too short")
    eid, length, version, epoch, count = _HEAD.unpack_from(data)
    if eid != SCHEDULE_ELEMENT_ID:
        raise CorruptFrameError(f"unexpected element id {eid:#x}")
    n, default = count & 0x1F, count >> 5
    if length != _HEAD.size - 2 + n * _GROUP.size or len(data) < 2 + length:
        raise CorruptFrameError("schedule element length mismatch")
    groups = []
    for i in range(n):
        off, dur, per, state, caps = _GROUP.unpack_from(data, _HEAD.size + i * _GROUP.size)
        try:
            target = PowerState(state & 0x7F)
        except ValueError:
            raise CorruptFrameError(f"unknown power state code {state & 0x7F}") from None
        groups.append(IntervalGroup(
            start_offset=off, duration=dur, period=per, target_state=target,
            capabilities=None if caps == 0 else unpack_caps(caps),
            one_shot=bool(state & _ONE_SHOT),
        ))
    try:
        default_state = PowerState(default)
    except ValueError:
        raise CorruptFrameError(f"unknown default state code {default}") from None
    return PowerSchedule(epoch=epoch, groups=tuple(groups), default_state=default_state, version=version)
