"""Per-AP traffic traces: the canonical CSV, synthetic campus traces and
traffic flow descriptions used by the simulator."""

from __future__ import annotations

import csv
import enum
import logging
import math
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

log = logging.getLogger(__name__)

WINDOW_S = 600
HEADER = ("ap_id", "t_start", "dl_bytes", "ul_bytes")


class TraceFormatError(ValueError):
    pass


class TraceRowError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.errors[:10])
        more = f" (+{len(self.errors) - 10} more)" if len(self.errors) > 10 else ""
        super().__init__(f"{len(self.errors)} malformed row(s): {lines}{more}")


@dataclass(frozen=True)
class TraceSample:
    ap_id: str
    t_start: datetime
    dl_bytes: int
    ul_bytes: int
    window: float = WINDOW_S

    def __post_init__(self):
        if self.dl_bytes < 0 or self.ul_bytes < 0:
            raise ValueError("byte counts must be non-negative")


def sample_rate(sample: TraceSample) -> float:
    """Mean total (UL + DL) traffic of the sample in bit/s."""
    if not sample.window > 0:
        raise ValueError("sample window must be positive")
    return 8 * (sample.dl_bytes + sample.ul_bytes) / sample.window


def format_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_time(text: str) -> datetime:
    t = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def _rows_to_samples(rows: Iterable, first_line: int, strict: bool) -> list:
    samples, errors = [], []
    for lineno, row in enumerate(rows, first_line):
        try:
            dl, ul = int(row["dl_bytes"]), int(row["ul_bytes"])
            if dl < 0 or ul < 0:
                raise ValueError("negative byte count")
            if not row["ap_id"]:
                raise ValueError("empty ap_id")
            samples.append(TraceSample(row["ap_id"], parse_time(row["t_start"]), dl, ul))
        except (ValueError, TypeError, KeyError) as exc:
            errors.append((lineno, str(exc)))
    if errors:
        if strict:
            raise TraceRowError(errors)
        for n, msg in errors:
            log.warning("skipping line %d: %s", n, msg)
    samples.sort(key=lambda s: (s.ap_id, s.t_start))
    return samples


def load_trace(path, strict: bool = True) -> list:
    """Read a canonical trace CSV sorted by (ap_id, t_start)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceFormatError(f"{path}: missing header")
        missing = [c for c in HEADER if c not in reader.fieldnames]
        if missing:
            raise TraceFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        return _rows_to_samples(reader, 2, strict)


def load_mapped_csv(path, mapping: dict, strict: bool = True, scale: Optional[dict] = None) -> list:
    """Read a foreign per-AP CSV by renaming its columns to the canonical ones.

    ``mapping`` maps canonical names (``ap_id``, ``t_start``, ``dl_bytes``,
    ``ul_bytes``) to the source file's column names; ``scale`` optionally
    multiplies byte columns, e.g. ``{"dl_bytes": 1024}`` for KiB counters.
    """
    scale = scale or {}
    missing = [c for c in HEADER if c not in mapping]
    if missing:
        raise TraceFormatError(f"mapping lacks {', '.join(missing)}")

    def convert(row):
        out = {c: row.get(mapping[c]) for c in HEADER}
        for c, k in scale.items():
            out[c] = str(int(round(float(out[c]) * k)))
        return out

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        absent = [mapping[c] for c in HEADER if mapping[c] not in (reader.fieldnames or ())]
        if absent:
            raise TraceFormatError(f"{path}: missing column(s) {', '.join(absent)}")
        return _rows_to_samples((convert(r) for r in reader), 2, strict)


def save_trace(samples: Sequence[TraceSample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for s in samples:
            w.writerow((s.ap_id, format_time(s.t_start), s.dl_bytes, s.ul_bytes))


def fill_gaps(samples: Sequence[TraceSample]):
    """Insert zero-traffic samples for missing windows of each AP.

    Returns ``(filled, gaps)`` where ``gaps`` lists the (ap_id, t_start)
    pairs that were invented.
    """
    filled, gaps = [], []
    step = timedelta(seconds=WINDOW_S)
    prev = None
    for s in sorted(samples, key=lambda s: (s.ap_id, s.t_start)):
        if prev is not None and prev.ap_id == s.ap_id:
            t = prev.t_start + step
            while t < s.t_start:
                filled.append(TraceSample(s.ap_id, t, 0, 0))
                gaps.append((s.ap_id, t))
                t += step
        filled.append(s)
        prev = s
    if gaps:
        log.info("filled %d missing window(s) with zero traffic", len(gaps))
    return filled, gaps


# --- synthetic campus traces ------------------------------------------------

@dataclass(frozen=True)
class DiurnalParams:
    """Shape of a synthetic campus day (illustrative defaults).

    Per-AP rates follow an office-hours plateau with a mild sinusoidal
    ripple; a small share of "hot" APs carries much more traffic. Rates are
    lognormal around the diurnal mean.
    """

    office_start_h: float = 8.0
    office_end_h: float = 20.0
    office_mean_bps: float = 6.0e6
    night_mean_bps: float = 0.15e6
    peak_ratio: float = 10.0  # office mean / night mean must exceed this
    ripple: float = 0.25
    ramp_h: float = 1.0
    hot_fraction: float = 0.05
    hot_factor: float = 8.0
    sigma: float = 0.9
    night_zero_fraction: float = 0.4
    day_zero_fraction: float = 0.02
    dl_share: float = 0.8

    def mean_rate(self, hour: float) -> float:
        """Expected per-AP rate at ``hour`` (0-24) for an ordinary AP, before zeros."""
        s, e, r = self.office_start_h, self.office_end_h, self.ramp_h
        if hour < s - r or hour >= e + r:
            w = 0.0
        elif hour < s:
            w = (hour - (s - r)) / r
        elif hour < e:
            w = 1.0
        else:
            w = 1.0 - (hour - e) / r
        mid = 0.5 * (s + e)
        shape = 1.0 + self.ripple * math.cos(math.pi * (hour - mid) / (e - s))
        day = self.office_mean_bps * shape / (1.0 + self.ripple * 2 / math.pi)
        return self.night_mean_bps + w * (day - self.night_mean_bps)

    def is_night(self, hour: float) -> bool:
        return hour < 6.0


DEFAULT_START = datetime(2019, 1, 16, tzinfo=timezone.utc)  # a Wednesday


def synth_campus(
    n_aps: int,
    days: int = 1,
    profile: DiurnalParams = DiurnalParams(),
    seed: int = 0,
    start: datetime = DEFAULT_START,
) -> list:
    """Generate ``n_aps * days * 144`` ten-minute samples, sorted by AP and time."""
    if n_aps < 1:
        raise ValueError("n_aps must be >= 1")
    per_day = 86_400 // WINDOW_S
    width = len(str(n_aps - 1))
    out = []
    for a in range(n_aps):
        ap_id = f"ap{a:0{width}d}"
        rng = random.Random(f"{seed}:{ap_id}")
        hot = rng.random() < profile.hot_fraction
        ap_scale = rng.lognormvariate(0.0, 0.5) * (profile.hot_factor if hot else 1.0)
        for k in range(days * per_day):
            t = start + timedelta(seconds=k * WINDOW_S)
            hour = (k % per_day) * WINDOW_S / 3600.0 + WINDOW_S / 7200.0
            zero_p = profile.night_zero_fraction if profile.is_night(hour) else profile.day_zero_fraction
            noise = rng.lognormvariate(-0.5 * profile.sigma ** 2, profile.sigma)
            u_zero, u_split = rng.random(), rng.random()
            if u_zero < zero_p:
                out.append(TraceSample(ap_id, t, 0, 0))
                continue
            rate = profile.mean_rate(hour) * ap_scale * noise
            total = int(rate * WINDOW_S / 8)
            share = min(1.0, max(0.0, profile.dl_share + 0.2 * (u_split - 0.5)))
            dl = int(total * share)
            out.append(TraceSample(ap_id, t, dl, total - dl))
    return out


# --- traffic flows for the simulator ----------------------------------------

class FlowKind(enum.Enum):
    CBR = "CBR"
    POISSON = "Poisson"
    SATURATED = "Saturated"


class Direction(enum.Enum):
    UL = "UL"
    DL = "DL"


class TrafficClass(enum.Enum):
    QOS_STRICT = "QoS-strict"
    LL = "LL"
    BE = "BE"


@dataclass(frozen=True)
class FlowSpec:
    kind: FlowKind
    rate: float  # bit/s; ignored for saturated flows
    packet_bytes: int
    direction: Direction
    traffic_class: TrafficClass = TrafficClass.BE
    start: float = 0.0  # s

    def __post_init__(self):
        if self.packet_bytes <= 0:
            raise ValueError("packet_bytes must be positive")
        if self.kind is not FlowKind.SATURATED and not self.rate > 0:
            raise ValueError("rate must be positive")


class FlowSource:
    """Arrival-time generator for one flow (integer nanoseconds)."""

    def __init__(self, spec: FlowSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self._next = int(round(spec.start * 1e9))
        if spec.kind is not FlowKind.SATURATED:
            self._mean_gap = spec.packet_bytes * 8 / spec.rate * 1e9
            self._cbr_index = 0
            if spec.kind is FlowKind.POISSON:
                self._next += int(rng.expovariate(1.0) * self._mean_gap)

    @property
    def saturated(self) -> bool:
        return self.spec.kind is FlowKind.SATURATED

    def peek(self) -> int:
        return self._next

    def pop(self) -> int:
        t = self._next
        if self.spec.kind is FlowKind.CBR:
            self._cbr_index += 1
            # index-based to avoid drift from accumulated rounding
            self._next = int(round(self.spec.start * 1e9 + self._cbr_index * self._mean_gap))
        elif self.spec.kind is FlowKind.POISSON:
            self._next = t + max(1, int(self.rng.expovariate(1.0) * self._mean_gap))
        return t
