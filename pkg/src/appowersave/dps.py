"""Dynamic and Semi-Dynamic Power Save.

The AP idles in a low capability mode (LCM) and switches to its high
capability mode (HCM) when a station asks for it with an Initial Control
Frame (ICF). Under the semi-dynamic policy the AP may hold such requests in
a pending queue and serve them with Trigger Frames once it is in HCM anyway.
"""

from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .codec import CorruptFrameError, check_fcs, fcs, pack_caps, unpack_caps
from .phy import PhyConfig, frame_airtime

ICF_TYPE = 0x01
ICR_TYPE = 0x02
TF_TYPE = 0x03

GRANT_EXPLICIT = 0
GRANT_TIMEOUT = 1
FLAG_LL = 0x01
FLAG_CAPPED = 0x01

_ICF_HEAD = struct.Struct("<BHHBIB")  # type, sta, caps, grant kind, grant value, flags
_ICR = struct.Struct("<BHHQB")  # type, ap, caps, effective_at, flags
_TF = struct.Struct("<BHHH")  # type, ap, sta, caps
ICF_BODY_LEN = _ICF_HEAD.size + 4


class WrongModeError(RuntimeError):
    pass


class InvalidCombinationError(ValueError):
    pass


class Mode(str, enum.Enum):
    LCM = "LCM"
    HCM = "HCM"


@dataclass(frozen=True)
class Capabilities:
    bandwidth: int
    nss: int
    mcs: int

    def capped(self, limit: "Capabilities") -> "Capabilities":
        return Capabilities(min(self.bandwidth, limit.bandwidth), min(self.nss, limit.nss), min(self.mcs, limit.mcs))

    def within(self, limit: "Capabilities") -> bool:
        return self.bandwidth <= limit.bandwidth and self.nss <= limit.nss and self.mcs <= limit.mcs

    def word(self) -> int:
        return pack_caps(self.bandwidth, self.nss, self.mcs)

    @classmethod
    def from_word(cls, word: int) -> "Capabilities":
        return cls(*unpack_caps(word, with_mcs=True))

    @classmethod
    def of(cls, cfg: PhyConfig) -> "Capabilities":
        return cls(cfg.bandwidth, cfg.nss, cfg.mcs_index)


# --- frames --------------------------------------------------------------

@dataclass(frozen=True)
class IcfFrame:
    sta_id: int
    requested: Capabilities
    explicit_duration: Optional[int] = None  # us of HCM
    inactivity_timeout: Optional[int] = None  # us without exchange
    ll_flag: bool = False
    padding_len: int = 0

    def __post_init__(self):
        if (self.explicit_duration is None) == (self.inactivity_timeout is None):
            raise ValueError("exactly one of explicit_duration and inactivity_timeout must be set")
        if self.padding_len < 0:
            raise ValueError("padding_len must be >= 0")

    @property
    def grant(self):
        if self.explicit_duration is not None:
            return GRANT_EXPLICIT, self.explicit_duration
        return GRANT_TIMEOUT, self.inactivity_timeout

    def logical(self) -> "IcfFrame":
        """The frame without its padding, as recovered from a truncated reception."""
        return IcfFrame(self.sta_id, self.requested, self.explicit_duration,
                        self.inactivity_timeout, self.ll_flag, 0)


@dataclass(frozen=True)
class IcrFrame:
    ap_id: int
    granted: Capabilities
    effective_at: int
    capped: bool = False


@dataclass(frozen=True)
class TriggerFrame:
    ap_id: int
    sta_id: int
    granted: Capabilities


def encode_icf(frame: IcfFrame) -> bytes:
    kind, value = frame.grant
    head = _ICF_HEAD.pack(ICF_TYPE, frame.sta_id, frame.requested.word(), kind, value,
                          FLAG_LL if frame.ll_flag else 0)
    body = head + fcs(head)
    full = body + bytes(frame.padding_len)
    return full + fcs(full)


def decode_icf(data: bytes) -> IcfFrame:
    """Decode an ICF, possibly cut short anywhere after the body checksum.

    The body checksum alone decides validity. When the trailing frame
    checksum also verifies, ``padding_len`` is the transmitted padding;
    otherwise it counts the padding bytes that were received.
    """
    data = bytes(data)
    if len(data) < ICF_BODY_LEN:
        raise CorruptFrameError("ICF shorter than its body")
    head, body_fcs = data[:_ICF_HEAD.size], data[_ICF_HEAD.size:ICF_BODY_LEN]
    if not check_fcs(head, body_fcs):
        raise CorruptFrameError("ICF body checksum mismatch")
    ftype, sta, caps, kind, value, flags = _ICF_HEAD.unpack(head)
    if ftype != ICF_TYPE:
        raise CorruptFrameError(f"not an ICF (type {ftype:#x})")
    if kind not in (GRANT_EXPLICIT, GRANT_TIMEOUT):
        raise CorruptFrameError(f"unknown grant kind {kind}")
    tail = data[ICF_BODY_LEN:]
    if len(tail) >= 4 and check_fcs(data[:-4], data[-4:]):
        padding = len(tail) - 4
    else:
        padding = len(tail)
    return IcfFrame(
        sta_id=sta,
        requested=Capabilities.from_word(caps),
        explicit_duration=value if kind == GRANT_EXPLICIT else None,
        inactivity_timeout=value if kind == GRANT_TIMEOUT else None,
        ll_flag=bool(flags & FLAG_LL),
        padding_len=padding,
    )


def encode_icr(frame: IcrFrame) -> bytes:
    body = _ICR.pack(ICR_TYPE, frame.ap_id, frame.granted.word(), frame.effective_at,
                     FLAG_CAPPED if frame.capped else 0)
    return body + fcs(body)


def decode_icr(data: bytes) -> IcrFrame:
    data = bytes(data)
    if len(data) != _ICR.size + 4 or not check_fcs(data[:-4], data[-4:]):
        raise CorruptFrameError("ICR checksum or length mismatch")
    ftype, ap, caps, effective_at, flags = _ICR.unpack(data[:-4])
    if ftype != ICR_TYPE:
        raise CorruptFrameError(f"not an ICR (type {ftype:#x})")
    return IcrFrame(ap, Capabilities.from_word(caps), effective_at, bool(flags & FLAG_CAPPED))


def encode_tf(frame: TriggerFrame) -> bytes:
    body = _TF.pack(TF_TYPE, frame.ap_id, frame.sta_id, frame.granted.word())
    return body + fcs(body)


def decode_tf(data: bytes) -> TriggerFrame:
    data = bytes(data)
    if len(data) != _TF.size + 4 or not check_fcs(data[:-4], data[-4:]):
        raise CorruptFrameError("TF checksum or length mismatch")
    ftype, ap, sta, caps = _TF.unpack(data[:-4])
    if ftype != TF_TYPE:
        raise CorruptFrameError(f"not a TF (type {ftype:#x})")
    return TriggerFrame(ap, sta, Capabilities.from_word(caps))


def required_padding(transition_delay: float, cfg: PhyConfig) -> int:
    """Fewest padding bytes whose added airtime at ``cfg`` covers ``transition_delay`` us."""
    if transition_delay < 0:
        raise ValueError("transition_delay must be >= 0")
    if transition_delay == 0:
        return 0
    base = frame_airtime(0, cfg)
    per_byte_us = 8 / cfg.bits_per_symbol * cfg.symbol_us
    # start just below the continuous estimate, then walk up to the symbol boundary
    n = max(0, int(transition_delay / per_byte_us) - cfg.bits_per_symbol // 8 - 1)
    while frame_airtime(n, cfg) - base < transition_delay - 1e-9:
        n += 1
    return n


# --- AP state machine ------------------------------------------------------

class PolicyKind(enum.Enum):
    ALWAYS_ACCEPT = "AlwaysAccept"
    DEFER = "Defer"


@dataclass(frozen=True)
class DpsPolicy:
    kind: PolicyKind = PolicyKind.ALWAYS_ACCEPT
    defer_batch_min: int = 3
    max_defer: int = 50_000

    def __post_init__(self):
        if self.defer_batch_min < 1:
            raise ValueError("defer_batch_min must be >= 1")
        if self.kind is PolicyKind.DEFER and self.max_defer <= 0:
            raise ValueError("max_defer must be positive for the deferring policy")


@dataclass(frozen=True)
class PendingRequest:
    sta_id: int
    requested: Capabilities
    since: int


@dataclass
class ApModeState:
    max_caps: Capabilities
    lcm_caps: Capabilities
    ap_id: int = 0
    transition_delay_up: int = 100
    transition_delay_down: int = 100
    mode: Mode = Mode.LCM
    hcm_expiry: Optional[int] = None
    inactivity_timeout: Optional[int] = None
    last_exchange: int = 0
    pending: deque = field(default_factory=deque)
    switch_to: Optional[Mode] = None
    switch_at: Optional[int] = None
    granted: Optional[Capabilities] = None

    @property
    def in_flight(self) -> bool:
        return self.switch_to is not None

    @property
    def heading_to_hcm(self) -> bool:
        return self.switch_to is Mode.HCM or (self.mode is Mode.HCM and self.switch_to is None)


@dataclass(frozen=True)
class SwitchNow:
    icr: IcrFrame


@dataclass(frozen=True)
class AlreadyHcm:
    icr: IcrFrame


@dataclass(frozen=True)
class Deferred:
    queued: int
    switch_scheduled: bool = False


@dataclass(frozen=True)
class Discarded:
    reason: str


@dataclass(frozen=True)
class ModeChange:
    to: Mode
    at: int


def _apply_grant(state: ApModeState, icf: IcfFrame, start: int) -> None:
    if icf.explicit_duration is not None:
        expiry = start + icf.explicit_duration
        # a new grant never shortens the running one
        state.hcm_expiry = expiry if state.hcm_expiry is None else max(state.hcm_expiry, expiry)
    else:
        old = state.inactivity_timeout or 0
        state.inactivity_timeout = max(old, icf.inactivity_timeout)


def _schedule_switch(state: ApModeState, to: Mode, at: int) -> None:
    state.switch_to, state.switch_at = to, at


def on_icf(state: ApModeState, icf: Union[IcfFrame, bytes], policy: DpsPolicy, now: int):
    """React to an ICF received at ``now``; returns the AP's decision."""
    if isinstance(icf, (bytes, bytearray)):
        try:
            icf = decode_icf(icf)
        except CorruptFrameError as exc:
            return Discarded(str(exc))
    apply_due(state, now)
    granted = icf.requested.capped(state.max_caps)
    capped = granted != icf.requested
    state.last_exchange = now

    if state.mode is Mode.HCM or state.switch_to is Mode.HCM:
        if state.switch_to is Mode.LCM:
            # still in HCM: the step down is called off
            state.switch_to = state.switch_at = None
        effective = state.switch_at if state.switch_to is Mode.HCM else now
        _apply_grant(state, icf, effective)
        state.granted = granted if state.granted is None else state.granted
        return AlreadyHcm(IcrFrame(state.ap_id, granted, effective, capped))

    if icf.ll_flag or policy.kind is PolicyKind.ALWAYS_ACCEPT:
        effective = now + state.transition_delay_up
        # a pending switch back down is superseded
        _schedule_switch(state, Mode.HCM, effective)
        state.hcm_expiry = None
        state.inactivity_timeout = None
        _apply_grant(state, icf, effective)
        state.granted = granted
        return SwitchNow(IcrFrame(state.ap_id, granted, effective, capped))

    state.pending.append(PendingRequest(icf.sta_id, granted, now))
    triggered = _maybe_release_pending(state, policy, now)
    if triggered:
        _apply_grant(state, icf, state.switch_at)
    return Deferred(len(state.pending), triggered)


def _maybe_release_pending(state: ApModeState, policy: DpsPolicy, now: int) -> bool:
    if not state.pending or state.heading_to_hcm:
        return False
    oldest = state.pending[0].since
    if len(state.pending) >= policy.defer_batch_min or now - oldest >= policy.max_defer:
        _schedule_switch(state, Mode.HCM, now + state.transition_delay_up)
        state.hcm_expiry = None
        state.inactivity_timeout = None
        state.granted = max((p.requested for p in state.pending),
                            key=lambda c: (c.bandwidth * c.nss, c.mcs))
        return True
    return False


def apply_due(state: ApModeState, now: int) -> Optional[Mode]:
    """Complete a scheduled transition whose time has come; returns the new mode."""
    if state.switch_to is not None and now >= state.switch_at:
        state.mode, at = state.switch_to, state.switch_at
        state.switch_to = state.switch_at = None
        if state.mode is Mode.LCM:
            state.hcm_expiry = state.inactivity_timeout = None
            state.granted = None
        else:
            state.last_exchange = max(state.last_exchange, at)
            if state.hcm_expiry is None and state.inactivity_timeout is None:
                # grant-less entries (deferred batches) fall back to inactivity
                state.inactivity_timeout = DEFAULT_BATCH_TIMEOUT
        return state.mode
    return None


DEFAULT_BATCH_TIMEOUT = 10_000


def drain_pending(state: ApModeState, now: int) -> list:
    """One Trigger Frame per distinct pending station, oldest first."""
    if state.mode is not Mode.HCM:
        raise WrongModeError("pending requests are served only in HCM")
    seen, out = set(), []
    caps = state.granted or state.max_caps
    while state.pending:
        req = state.pending.popleft()
        if req.sta_id not in seen:
            seen.add(req.sta_id)
            out.append(TriggerFrame(state.ap_id, req.sta_id, caps))
    return out


def record_exchange(state: ApModeState, now: int) -> None:
    state.last_exchange = max(state.last_exchange, now)


def tick(state: ApModeState, now: int, policy: Optional[DpsPolicy] = None) -> Optional[ModeChange]:
    """Timer housekeeping: grant expiry, inactivity and deferral deadlines."""
    apply_due(state, now)
    if state.mode is Mode.HCM and state.switch_to is None:
        expired = state.hcm_expiry is not None and now >= state.hcm_expiry
        idle = (state.inactivity_timeout is not None
                and now - state.last_exchange >= state.inactivity_timeout)
        if expired or idle:
            _schedule_switch(state, Mode.LCM, now + state.transition_delay_down)
            return ModeChange(Mode.LCM, state.switch_at)
        return None
    if policy is not None and policy.kind is PolicyKind.DEFER and state.mode is Mode.LCM:
        if _maybe_release_pending(state, policy, now):
            return ModeChange(Mode.HCM, state.switch_at)
    return None


def next_deadline(state: ApModeState, policy: Optional[DpsPolicy] = None) -> Optional[int]:
    """Earliest future time at which :func:`tick` or :func:`apply_due` may act."""
    times = []
    if state.switch_to is not None:
        times.append(state.switch_at)
    elif state.mode is Mode.HCM:
        if state.hcm_expiry is not None:
            times.append(state.hcm_expiry)
        if state.inactivity_timeout is not None:
            times.append(state.last_exchange + state.inactivity_timeout)
    elif policy is not None and policy.kind is PolicyKind.DEFER and state.pending:
        times.append(state.pending[0].since + policy.max_defer)
    return min(times) if times else None


# --- combination with scheduled PS ---------------------------------------

class SchedulePhase(enum.Enum):
    SP = "SP"
    PS_PERIOD = "PS-period"
    DOZE = "Doze"


class SdpsType(enum.Enum):
    TYPE1 = "Type1"
    TYPE2 = "Type2"


class Behavior(enum.Enum):
    FULL_CAPABILITIES = "FullCapabilities"
    SDPS_ACTIVE = "SDPS-active"
    DOZE = "Doze"


def combined_mode(schedule_phase: SchedulePhase, sdps_type: SdpsType) -> Behavior:
    if sdps_type is SdpsType.TYPE1:
        if schedule_phase is SchedulePhase.DOZE:
            raise InvalidCombinationError("Type 1 schedules contain no Doze periods")
        if schedule_phase is SchedulePhase.SP:
            return Behavior.FULL_CAPABILITIES
        return Behavior.SDPS_ACTIVE
    if schedule_phase is SchedulePhase.SP:
        return Behavior.SDPS_ACTIVE
    return Behavior.DOZE
