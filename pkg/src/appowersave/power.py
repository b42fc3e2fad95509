"""AP power states, power profiles and timeline energy integration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


class PowerState(enum.IntEnum):
    # ordered by availability; the integer value doubles as the wire code
    DOZE = 0
    LISTEN = 1
    INTERRUPTIBLE_LISTEN = 2
    REDUCED_CAPABILITIES = 3
    FULL_CAPABILITIES = 4

    @property
    def awake(self) -> bool:
        return self is not PowerState.DOZE

    @property
    def can_transmit(self) -> bool:
        return self not in (PowerState.DOZE, PowerState.LISTEN)


class RadioActivity(enum.Enum):
    TX = "tx"
    RX = "rx"
    IDLE = "idle"
    OFF = "off"


ALLOWED_ACTIVITIES = {
    PowerState.DOZE: {RadioActivity.OFF},
    PowerState.LISTEN: {RadioActivity.IDLE, RadioActivity.RX},
    PowerState.INTERRUPTIBLE_LISTEN: {RadioActivity.IDLE, RadioActivity.RX, RadioActivity.TX},
    PowerState.REDUCED_CAPABILITIES: {RadioActivity.IDLE, RadioActivity.RX, RadioActivity.TX},
    PowerState.FULL_CAPABILITIES: {RadioActivity.IDLE, RadioActivity.RX, RadioActivity.TX},
}

MODES = ("LCM", "HCM")


class IncompleteProfileError(KeyError):
    pass


class ProfileError(ValueError):
    pass


class InvalidTimelineError(ValueError):
    pass


PROFILE_KEYS = (
    "lcm.idle", "lcm.rx", "lcm.tx",
    "hcm.idle", "hcm.rx", "hcm.tx",
    "doze", "listen", "interruptible_listen", "wur",
)


@dataclass(frozen=True)
class PowerProfile:
    """Power draw in watts, keyed by the flat names used in profile files.

    Awake capability states draw ``<mode>.<activity>``; Doze, Listen and
    InterruptibleListen have one mode-independent figure each, except that a
    transmission from InterruptibleListen is charged at ``lcm.tx``.
    """

    watts: dict
    name: str = "custom"

    @property
    def wur_watts(self) -> float:
        return self.watts["wur"]

    def power(self, state: PowerState, mode: Optional[str], activity: RadioActivity) -> float:
        if activity not in ALLOWED_ACTIVITIES[state]:
            raise InvalidTimelineError(f"{activity.value} is not possible in {state.name}")
        if state is PowerState.DOZE:
            key = "doze"
        elif state is PowerState.LISTEN:
            key = "listen"
        elif state is PowerState.INTERRUPTIBLE_LISTEN:
            key = "lcm.tx" if activity is RadioActivity.TX else "interruptible_listen"
        else:
            if mode not in MODES:
                raise InvalidTimelineError(f"{state.name} segment needs a capability mode, got {mode!r}")
            key = f"{mode.lower()}.{activity.value}"
        try:
            return self.watts[key]
        except KeyError:
            raise IncompleteProfileError(f"power profile has no entry for {key!r}") from None

    def with_watts(self, updates: dict, name: Optional[str] = None) -> "PowerProfile":
        return PowerProfile({**self.watts, **updates}, name or self.name)

    def violations(self) -> list[str]:
        """Ordering/sign problems; empty for a consistent profile."""
        w = self.watts
        missing = [k for k in PROFILE_KEYS if k not in w]
        if missing:
            return [f"missing keys: {', '.join(missing)}"]
        out = [f"{k} is negative" for k in PROFILE_KEYS if w[k] < 0]
        chain = ["doze", "listen", "interruptible_listen", "lcm.idle", "hcm.idle"]
        if not w["doze"] < w["listen"]:
            out.append("doze must draw strictly less than listen")
        for lo, hi in zip(chain[1:], chain[2:]):
            if w[lo] > w[hi]:
                out.append(f"{lo} must not exceed {hi}")
        for mode in ("lcm", "hcm"):
            if not w[f"{mode}.idle"] <= w[f"{mode}.rx"] <= w[f"{mode}.tx"]:
                out.append(f"{mode} must satisfy idle <= rx <= tx")
        if not w["wur"] < 1e-3:
            out.append("wake-up radio must draw less than 1 mW")
        return out

    def validate(self) -> "PowerProfile":
        problems = self.violations()
        if problems:
            raise ProfileError("; ".join(problems))
        return self


def load_profile(path) -> PowerProfile:
    """Read a ``key = watts`` file; ``#`` starts a comment.

    ``interruptible_listen`` may be omitted and then defaults to 110 % of
    ``listen``.
    """
    path = Path(path)
    watts = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        key, value = key.strip().lower(), value.strip()
        if not sep or key not in PROFILE_KEYS:
            raise ProfileError(f"{path}:{lineno}: unrecognised line {raw!r}")
        try:
            watts[key] = float(value)
        except ValueError:
            raise ProfileError(f"{path}:{lineno}: {value!r} is not a number") from None
    if "interruptible_listen" not in watts and "listen" in watts:
        watts["interruptible_listen"] = round(watts["listen"] * 1.1, 12)
    return PowerProfile(watts, name=path.stem).validate()


def dump_profile(profile: PowerProfile) -> str:
    lines = [f"# power profile: {profile.name} (watts)"]
    lines += [f"{k} = {profile.watts[k]!r}" for k in PROFILE_KEYS]
    return "\n".join(lines) + "\n"


def save_profile(profile: PowerProfile, path) -> None:
    Path(path).write_text(dump_profile(profile), encoding="utf-8")


def reference_profile() -> PowerProfile:
    """Illustrative profile shipped with the package (not measured values)."""
    from importlib.resources import files

    return load_profile(files("appowersave") / "data" / "reference_profile.cfg")


@dataclass(frozen=True)
class Segment:
    state: PowerState
    mode: Optional[str]
    activity: RadioActivity
    duration: float  # seconds


@dataclass
class StateTimeline:
    segments: list = field(default_factory=list)

    def __post_init__(self):
        for seg in self.segments:
            _check_segment(seg)

    def append(self, state, mode, activity, duration) -> None:
        seg = Segment(state, mode, activity, duration)
        _check_segment(seg)
        self.segments.append(seg)

    def extend(self, other: "StateTimeline") -> "StateTimeline":
        return StateTimeline(self.segments + other.segments)

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def _check_segment(seg: Segment) -> None:
    if not seg.duration >= 0:
        raise InvalidTimelineError(f"negative duration in {seg}")
    if seg.activity not in ALLOWED_ACTIVITIES[seg.state]:
        raise InvalidTimelineError(f"{seg.activity.value} is not possible in {seg.state.name}")


def energy(timeline: Iterable[Segment], profile: PowerProfile) -> float:
    """Energy in joules: sum of power x duration over the segments."""
    return math.fsum(profile.power(s.state, s.mode, s.activity) * s.duration for s in timeline)


def average_power(timeline: StateTimeline, profile: PowerProfile) -> float:
    total = timeline.total_duration
    if total <= 0:
        raise ValueError("average power is undefined for a zero-duration timeline")
    return energy(timeline, profile) / total


def savings_percent(baseline: float, candidate: float) -> float:
    if not baseline > 0:
        raise ValueError(f"baseline energy must be positive, got {baseline}")
    return 100.0 * (baseline - candidate) / baseline
