"""Simulation results and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..power import PowerProfile, StateTimeline, average_power, energy


@dataclass(frozen=True)
class FrameRecord:
    start: int  # ns
    end: int
    src: str
    dst: str
    kind: str  # data, icf, icr, tf, beacon
    mode: Optional[str]
    ok: bool
    info: str = ""


@dataclass(frozen=True)
class FlowStats:
    flow_id: str
    src: str
    dst: str
    direction: str
    traffic_class: str
    offered_bps: float
    throughput_bps: float
    delivered: int
    dropped: int
    latency_p50_us: float
    latency_p95_us: float
    latency_p99_us: float


@dataclass(frozen=True)
class Collision:
    time: int  # ns
    frames: int
    devices: tuple


@dataclass
class SimReport:
    duration_ns: int
    raw_timelines: dict  # name -> [(start_ns, end_ns, state, mode, activity)]
    flows: list
    event_counts: dict
    collisions: list
    frames: list
    beacons: list  # (time_ns, advertised_version, active_version)
    conflicts: list  # (time_ns, message)
    activations: list = field(default_factory=list)  # (proposed_ns, version, activation_ns)

    @property
    def duration_s(self) -> float:
        return self.duration_ns / 1e9

    def timeline(self, name: str) -> StateTimeline:
        segs = StateTimeline()
        for start, end, state, mode, act in self.raw_timelines[name]:
            segs.append(state, mode, act, (end - start) / 1e9)
        return segs

    def average_power(self, name: str, profile: PowerProfile) -> float:
        return average_power(self.timeline(name), profile)

    def energy(self, name: str, profile: PowerProfile) -> float:
        return energy(self.timeline(name), profile)

    def flow(self, flow_id: str) -> FlowStats:
        for f in self.flows:
            if f.flow_id == flow_id:
                return f
        raise KeyError(flow_id)

    @property
    def collided_frames(self) -> int:
        return sum(c.frames for c in self.collisions)

    def summary(self) -> dict:
        out = {
            "duration_s": self.duration_s,
            "collisions": len(self.collisions),
            "collided_frames": self.collided_frames,
            "beacons": len(self.beacons),
            "conflicts": len(self.conflicts),
            "frames": len(self.frames),
        }
        for kind in sorted(self.event_counts):
            out[f"events.{kind}"] = self.event_counts[kind]
        return out

    # --- CSV ---------------------------------------------------------

    def timelines_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device", "start_us", "end_us", "state", "mode", "activity"])
        for name in sorted(self.raw_timelines):
            for start, end, state, mode, act in self.raw_timelines[name]:
                w.writerow([name, _us(start), _us(end), state.name, mode or "", act.value])
        return buf.getvalue()

    def flows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["flow", "src", "dst", "direction", "class", "offered_bps", "throughput_bps",
                    "delivered", "dropped", "latency_p50_us", "latency_p95_us", "latency_p99_us"])
        for f in self.flows:
            w.writerow([f.flow_id, f.src, f.dst, f.direction, f.traffic_class, repr(f.offered_bps),
                        repr(f.throughput_bps), f.delivered, f.dropped, repr(f.latency_p50_us),
                        repr(f.latency_p95_us), repr(f.latency_p99_us)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in self.summary().items():
            w.writerow([k, v])
        return buf.getvalue()

    def frames_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_us", "end_us", "src", "dst", "kind", "mode", "ok", "info"])
        for f in self.frames:
            w.writerow([_us(f.start), _us(f.end), f.src, f.dst, f.kind, f.mode or "", int(f.ok), f.info])
        return buf.getvalue()

    def write_csv(self, out_dir) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in (("timelines.csv", self.timelines_csv()), ("flows.csv", self.flows_csv()),
                           ("frames.csv", self.frames_csv()), ("summary.csv", self.summary_csv())):
            path = out_dir / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        return written


def _us(ns: int) -> str:
    # exact decimal rendering of integer nanoseconds
    return f"{ns // 1000}.{ns % 1000:03d}"
