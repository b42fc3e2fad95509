"""Cross-link power save for multi-link APs, plus an abstract wake-up radio."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from .codec import CorruptFrameError, check_fcs, fcs
from .power import PowerProfile, PowerState, energy

WAKEUP_TYPE = 0x04
_WAKEUP = struct.Struct("<BH")
MAX_LINKS = 16
DEFAULT_LINK_IDLE_TIMEOUT = 100_000  # us


class UnknownLinkError(KeyError):
    pass


class ProtocolViolation(RuntimeError):
    pass


class WurDisabledError(RuntimeError):
    pass


@dataclass
class Link:
    link_id: int
    state: PowerState = PowerState.DOZE
    capabilities: tuple = (80, 2)
    wake_latency: int = 0  # us
    awake_at: Optional[int] = None  # pending wake-up completion
    last_activity: int = 0

    @property
    def dozing(self) -> bool:
        return self.state is PowerState.DOZE


@dataclass
class MldState:
    links: dict
    active_link: int
    idle_timeout: int = DEFAULT_LINK_IDLE_TIMEOUT

    def __post_init__(self):
        if isinstance(self.links, (list, tuple)):
            links = {}
            for link in self.links:
                if link.link_id in links:
                    raise ValueError(f"duplicate link id {link.link_id}")
                links[link.link_id] = link
            self.links = links
        for lid in self.links:
            if not 0 <= lid < MAX_LINKS:
                raise ValueError(f"link id {lid} outside 0-{MAX_LINKS - 1}")
        if self.active_link not in self.links:
            raise UnknownLinkError(self.active_link)
        if self.links[self.active_link].dozing:
            raise ValueError("the active link cannot doze")


@dataclass(frozen=True)
class WakeUpFrame:
    link_bitmap: int

    def __post_init__(self):
        if not 0 < self.link_bitmap <= 0xFFFF:
            raise ValueError("wake-up bitmap must name at least one of 16 links")

    @classmethod
    def for_links(cls, *link_ids: int) -> "WakeUpFrame":
        return cls(sum(1 << i for i in set(link_ids)))

    @property
    def link_ids(self) -> list:
        return [i for i in range(MAX_LINKS) if self.link_bitmap >> i & 1]


def encode_wakeup(frame: WakeUpFrame) -> bytes:
    body = _WAKEUP.pack(WAKEUP_TYPE, frame.link_bitmap)
    return body + fcs(body)


def decode_wakeup(data: bytes) -> WakeUpFrame:
    data = bytes(data)
    if len(data) != _WAKEUP.size + 4 or not check_fcs(data[:-4], data[-4:]):
        raise CorruptFrameError("wake-up frame checksum or length mismatch")
    ftype, bitmap = _WAKEUP.unpack(data[:-4])
    if ftype != WAKEUP_TYPE:
        raise CorruptFrameError(f"not a wake-up frame (type {ftype:#x})")
    if bitmap == 0:
        raise CorruptFrameError("empty wake-up bitmap")
    return WakeUpFrame(bitmap)


def on_wakeup_frame(mld: MldState, frame: WakeUpFrame, now: int, rx_link: Optional[int] = None) -> list:
    """Wake the requested links; returns ``[(link_id, awake_at), ...]`` in link order."""
    rx_link = mld.active_link if rx_link is None else rx_link
    if rx_link != mld.active_link:
        raise ProtocolViolation(f"wake-up frame received on link {rx_link}, not the active link")
    unknown = [i for i in frame.link_ids if i not in mld.links]
    if unknown:
        raise UnknownLinkError(f"bitmap names unknown link(s) {unknown}")
    out = []
    for lid in frame.link_ids:
        link = mld.links[lid]
        link.last_activity = now
        if not link.dozing:
            out.append((lid, now))
        elif link.awake_at is not None:
            out.append((lid, link.awake_at))
        else:
            link.awake_at = now + link.wake_latency
            out.append((lid, link.awake_at))
    return out


def advance(mld: MldState, now: int, awake_state: PowerState = PowerState.FULL_CAPABILITIES) -> list:
    """Finish due wake-ups and put idle non-active links back to Doze.

    Returns ``[(link_id, new_state), ...]`` for every link that changed.
    """
    changes = []
    for lid, link in sorted(mld.links.items()):
        if link.awake_at is not None and now >= link.awake_at:
            link.state, link.awake_at = awake_state, None
            link.last_activity = max(link.last_activity, now)
            changes.append((lid, link.state))
        elif (lid != mld.active_link and not link.dozing and link.awake_at is None
              and now - link.last_activity >= mld.idle_timeout):
            link.state = PowerState.DOZE
            changes.append((lid, link.state))
    return changes


def note_activity(mld: MldState, link_id: int, now: int) -> None:
    mld.links[link_id].last_activity = now


def mld_energy(link_timelines: dict, profile: PowerProfile) -> float:
    """Total energy of an MLD as the sum over its links."""
    return sum(energy(tl, profile) for tl in link_timelines.values())


@dataclass(frozen=True)
class WurCompanion:
    enabled: bool = True
    wake_frame_airtime: float = 0.0  # us
    pcr_wake_latency: float = 0.0  # us

    def check_power(self, profile: PowerProfile) -> None:
        if not profile.wur_watts < 1e-3:
            raise ValueError(f"wake-up radio draws {profile.wur_watts} W, must stay below 1 mW")


def wur_wakeup(companion: WurCompanion, now: float) -> float:
    """Time at which the primary radio is up after a wake-up frame starting at ``now``."""
    if not companion.enabled:
        raise WurDisabledError("the wake-up radio is disabled")
    if companion.wake_frame_airtime < 0 or companion.pcr_wake_latency < 0:
        raise ValueError("delays must be non-negative")
    return now + companion.wake_frame_airtime + companion.pcr_wake_latency
