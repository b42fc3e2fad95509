"""Simulation configuration and scenario description, plus the YAML loader."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ..dps import DpsPolicy, PolicyKind, SdpsType
from ..phy import HCM_DEFAULT, LCM_DEFAULT, InvalidPhyConfig, PhyConfig
from ..power import PowerState
from ..schedule import IntervalGroup, PowerSchedule, beacon_conflicts, validate as validate_schedule
from ..trace import Direction, FlowKind, FlowSpec, TrafficClass


class ScenarioError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    sim_duration: int = 1_000_000  # us
    slot: int = 9
    sifs: int = 16
    difs: int = 34
    beacon_interval: int = 102_400
    cwmin: int = 15
    cwmax: int = 1023
    obss_freeze: bool = False
    freeze_in_bss: bool = True  # test-only switch
    retry_limit: int = 7
    beacon_bytes: int = 200
    queue_limit: int = 1000

    def problems(self) -> list:
        out = []
        if not self.sifs < self.difs:
            out.append("sifs must be shorter than difs")
        if self.beacon_interval <= 0:
            out.append("beacon_interval must be positive")
        if self.sim_duration <= 0:
            out.append("sim_duration must be positive")
        if not 0 < self.cwmin <= self.cwmax:
            out.append("need 0 < cwmin <= cwmax")
        if self.slot <= 0:
            out.append("slot must be positive")
        return out


@dataclass(frozen=True)
class ApSpec:
    name: str = "ap"
    mode: str = "HCM"  # LCM, HCM or DPS
    lcm_phy: PhyConfig = LCM_DEFAULT
    hcm_phy: PhyConfig = HCM_DEFAULT
    schedule: Optional[PowerSchedule] = None
    schedule_updates: tuple = ()  # ((at_us, PowerSchedule), ...)
    dps_policy: Optional[DpsPolicy] = None
    sdps_type: Optional[SdpsType] = None
    transition_delay_up: int = 100
    transition_delay_down: int = 100
    flows: tuple = ()  # DL flows as (station name, FlowSpec)


@dataclass(frozen=True)
class StationSpec:
    name: str
    legacy: bool = False
    dps_capable: bool = False
    listen_interval: int = 1
    flows: tuple = ()  # UL FlowSpecs
    icf_explicit_duration: Optional[int] = None
    icf_inactivity_timeout: Optional[int] = 10_000


@dataclass(frozen=True)
class ObssSpec:
    name: str
    phy: PhyConfig = HCM_DEFAULT
    flows: tuple = ()


@dataclass(frozen=True)
class ScenarioSpec:
    ap: ApSpec = field(default_factory=ApSpec)
    stations: tuple = ()
    obss: tuple = ()

    def problems(self, config: SimConfig) -> list:
        out = list(config.problems())
        names = [self.ap.name] + [s.name for s in self.stations] + [o.name for o in self.obss]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            out.append(f"duplicate entity name(s): {', '.join(dupes)}")
        ap = self.ap
        if ap.mode not in ("LCM", "HCM", "DPS"):
            out.append(f"AP mode must be LCM, HCM or DPS, not {ap.mode!r}")
        if ap.mode == "DPS" and ap.dps_policy is None:
            out.append("DPS mode needs a dps_policy")
        if ap.sdps_type is not None and (ap.dps_policy is None or ap.schedule is None):
            out.append("sdps_type needs both a schedule and a dps_policy")
        if ap.transition_delay_up < 0 or ap.transition_delay_down < 0:
            out.append("transition delays must be non-negative")
        if ap.hcm_phy.bandwidth * ap.hcm_phy.nss <= ap.lcm_phy.bandwidth * ap.lcm_phy.nss:
            out.append("HCM must offer more bandwidth x streams than LCM")
        sta_names = {s.name for s in self.stations}
        for dst, _ in ap.flows:
            if dst not in sta_names:
                out.append(f"DL flow to unknown station {dst!r}")
        has_legacy = any(s.legacy for s in self.stations)
        schedules = ([ap.schedule] if ap.schedule else []) + [s for _, s in ap.schedule_updates]
        if ap.schedule_updates and ap.schedule is None:
            out.append("schedule_updates need an initial schedule")
        for sched in schedules:
            for v in validate_schedule(sched, has_legacy):
                where = "" if v.group is None else f" (group {v.group})"
                out.append(f"schedule v{sched.version}{where}: {v.message}")
            if sched.epoch > 0:
                out.append("schedule epoch must be 0 in simulations")
        if ap.schedule is not None:
            clash = beacon_conflicts(ap.schedule, config.beacon_interval, 1, config.sim_duration)
            if clash:
                out.append(f"schedule keeps the AP from sending {len(clash)} Beacon(s), first at {clash[0]} us")
            if ap.sdps_type is SdpsType.TYPE1 and any(g.target_state is PowerState.DOZE for g in ap.schedule.groups):
                out.append("a Type 1 combination cannot contain Doze intervals")
        for s in self.stations:
            if s.legacy and s.dps_capable:
                out.append(f"{s.name}: legacy stations cannot use DPS")
            if (s.icf_explicit_duration is None) == (s.icf_inactivity_timeout is None):
                out.append(f"{s.name}: exactly one ICF grant kind must be set")
            if s.listen_interval < 1:
                out.append(f"{s.name}: listen_interval must be >= 1")
        return out

    def check(self, config: SimConfig) -> None:
        problems = self.problems(config)
        if problems:
            raise ScenarioError(problems)


# --- YAML loading ------------------------------------------------------------

_STATE_NAMES = {
    "doze": PowerState.DOZE,
    "listen": PowerState.LISTEN,
    "interruptiblelisten": PowerState.INTERRUPTIBLE_LISTEN,
    "reducedcapabilities": PowerState.REDUCED_CAPABILITIES,
    "fullcapabilities": PowerState.FULL_CAPABILITIES,
}


def parse_state(name: str) -> PowerState:
    key = str(name).replace("_", "").replace("-", "").replace(" ", "").lower()
    try:
        return _STATE_NAMES[key]
    except KeyError:
        raise ScenarioError([f"unknown power state {name!r}"]) from None


def _phy(d, default: PhyConfig) -> PhyConfig:
    if d is None:
        return default
    try:
        return PhyConfig(
            mcs_index=int(d.get("mcs", default.mcs_index)),
            bandwidth=int(d.get("bandwidth", default.bandwidth)),
            nss=int(d.get("nss", default.nss)),
            guard_interval=d.get("gi", default.guard_interval),
        )
    except InvalidPhyConfig as exc:
        raise ScenarioError([str(exc)]) from None


def _flow(d, direction: Direction) -> FlowSpec:
    try:
        return FlowSpec(
            kind=FlowKind(d.get("kind", "CBR")),
            rate=float(d.get("rate_bps", 0) or 0),
            packet_bytes=int(d.get("packet_bytes", 1500)),
            direction=direction,
            traffic_class=TrafficClass(d.get("class", "BE")),
            start=float(d.get("start_s", 0.0)),
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioError([f"bad flow {d!r}: {exc}"]) from None


def parse_schedule(d) -> PowerSchedule:
    groups = []
    for g in d.get("groups", []):
        caps = g.get("capabilities")
        groups.append(IntervalGroup(
            start_offset=int(g.get("offset_us", 0)),
            duration=int(g["duration_us"]),
            period=int(g["period_us"]),
            target_state=parse_state(g["state"]),
            capabilities=tuple(caps) if caps else None,
            one_shot=bool(g.get("one_shot", False)),
        ))
    return PowerSchedule(
        epoch=int(d.get("epoch_us", 0)),
        groups=tuple(groups),
        default_state=parse_state(d.get("default_state", "FullCapabilities")),
        version=int(d.get("version", 0)),
    )


_CONFIG_KEYS = {
    "seed": "seed", "sim_duration_us": "sim_duration", "slot_us": "slot", "sifs_us": "sifs",
    "difs_us": "difs", "beacon_interval_us": "beacon_interval", "cwmin": "cwmin", "cwmax": "cwmax",
    "obss_freeze": "obss_freeze", "retry_limit": "retry_limit", "beacon_bytes": "beacon_bytes",
    "queue_limit": "queue_limit",
}


def parse_config(d) -> SimConfig:
    d = d or {}
    unknown = sorted(set(d) - set(_CONFIG_KEYS))
    if unknown:
        raise ScenarioError([f"unknown config key(s): {', '.join(unknown)}"])
    kwargs = {}
    for key, attr in _CONFIG_KEYS.items():
        if key in d:
            kwargs[attr] = bool(d[key]) if attr == "obss_freeze" else int(float(d[key]))
    return SimConfig(**kwargs)


def parse_scenario(doc: dict):
    """Build ``(SimConfig, ScenarioSpec)`` from a parsed YAML document."""
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario document must be a mapping"])
    config = parse_config(doc.get("config"))
    a = doc.get("ap") or {}
    policy = None
    if a.get("dps_policy"):
        p = a["dps_policy"]
        policy = DpsPolicy(
            kind=PolicyKind(p.get("kind", "AlwaysAccept")),
            defer_batch_min=int(p.get("defer_batch_min", 3)),
            max_defer=int(p.get("max_defer_us", 50_000)),
        )
    ap = ApSpec(
        name=a.get("name", "ap"),
        mode=a.get("mode", "HCM"),
        lcm_phy=_phy(a.get("lcm_phy"), LCM_DEFAULT),
        hcm_phy=_phy(a.get("hcm_phy"), HCM_DEFAULT),
        schedule=parse_schedule(a["schedule"]) if a.get("schedule") else None,
        schedule_updates=tuple(
            (int(u["at_us"]), parse_schedule(u["schedule"])) for u in a.get("schedule_updates", [])
        ),
        dps_policy=policy,
        sdps_type=SdpsType(a["sdps_type"]) if a.get("sdps_type") else None,
        transition_delay_up=int(a.get("transition_delay_up_us", 100)),
        transition_delay_down=int(a.get("transition_delay_down_us", 100)),
        flows=tuple((f["to"], _flow(f, Direction.DL)) for f in a.get("flows", [])),
    )
    stations = []
    for s in doc.get("stations", []):
        grant = s.get("icf_grant", {"inactivity_timeout_us": 10_000})
        stations.append(StationSpec(
            name=s["name"],
            legacy=bool(s.get("legacy", False)),
            dps_capable=bool(s.get("dps_capable", False)),
            listen_interval=int(s.get("listen_interval", 1)),
            flows=tuple(_flow(f, Direction.UL) for f in s.get("flows", [])),
            icf_explicit_duration=grant.get("explicit_duration_us"),
            icf_inactivity_timeout=grant.get("inactivity_timeout_us"),
        ))
    obss = [
        ObssSpec(name=o["name"], phy=_phy(o.get("phy"), HCM_DEFAULT),
                 flows=tuple(_flow(f, Direction.UL) for f in o.get("flows", [])))
        for o in doc.get("obss", [])
    ]
    return config, ScenarioSpec(ap=ap, stations=tuple(stations), obss=tuple(obss))


def load_scenario(path):
    with open(Path(path), encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_scenario(doc)
