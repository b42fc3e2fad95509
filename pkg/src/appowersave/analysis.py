"""The two studies: LCM/HCM crossover sweep and the campus savings study."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .phy import HCM_DEFAULT, LCM_DEFAULT, PhyConfig, data_rate, legacy_airtime
from .power import PowerProfile, savings_percent
from .sim import ApSpec, ScenarioSpec, SimConfig, StationSpec, run
from .trace import Direction, FlowKind, FlowSpec, TraceSample, format_time

SATURATION_RATIO = 0.95
CROSSOVER_PACKET_BYTES = 7935  # an A-MSDU sized MPDU; stands in for aggregation


class CalibrationError(ValueError):
    pass


def _mode_power(profile: PowerProfile, mode: str, load: float, rate: float) -> float:
    w = profile.watts
    rho = load / rate
    return w[f"{mode}.idle"] * (1 - rho) + w[f"{mode}.tx"] * rho


def analytic_crossover(profile: PowerProfile, lcm: PhyConfig = LCM_DEFAULT,
                       hcm: PhyConfig = HCM_DEFAULT) -> Optional[float]:
    """Load (bit/s) where both modes draw the same average power, or None.

    Each mode draws ``idle * (1 - rho) + tx * rho`` with ``rho`` the load
    over the mode's PHY rate.
    """
    w = profile.watts
    r_l, r_h = data_rate(lcm), data_rate(hcm)
    denom = (w["lcm.tx"] - w["lcm.idle"]) / r_l - (w["hcm.tx"] - w["hcm.idle"]) / r_h
    if denom <= 0:
        return None
    return (w["hcm.idle"] - w["lcm.idle"]) / denom


def calibrate_profile(target_crossover_bps: float, lcm: PhyConfig = LCM_DEFAULT,
                      hcm: PhyConfig = HCM_DEFAULT, base: Optional[PowerProfile] = None) -> PowerProfile:
    """Move ``hcm.idle`` so the analytic crossover lands on the target."""
    if base is None:
        from .power import reference_profile
        base = reference_profile()
    base.validate()
    if not target_crossover_bps > 0:
        raise CalibrationError("target crossover must be positive")
    current = analytic_crossover(base, lcm, hcm)
    if current is not None and math.isclose(current, target_crossover_bps, rel_tol=1e-12):
        return base
    r_l, r_h = data_rate(lcm), data_rate(hcm)
    if target_crossover_bps >= r_l:
        raise CalibrationError(
            f"target {target_crossover_bps:.4g} bit/s is not below the LCM rate {r_l:.4g} bit/s")
    rho_h = target_crossover_bps / r_h
    p_lcm = _mode_power(base, "lcm", target_crossover_bps, r_l)
    hcm_idle = (p_lcm - base.watts["hcm.tx"] * rho_h) / (1 - rho_h)
    out = base.with_watts({"hcm.idle": hcm_idle}, name=f"{base.name}-calibrated")
    problems = out.violations()
    if problems:
        raise CalibrationError(
            f"hcm.idle would have to be {hcm_idle:.4f} W, which breaks the profile: " + "; ".join(problems))
    got = analytic_crossover(out, lcm, hcm)
    if got is None or abs(got - target_crossover_bps) > 0.02 * target_crossover_bps:
        raise CalibrationError(f"calibration missed the target (got {got})")
    return out


# --- crossover study ----------------------------------------------------------

@dataclass(frozen=True)
class CrossoverPoint:
    offered_bps: float
    mode: str
    avg_watts: float
    delivered_bps: float
    saturated: bool


@dataclass(frozen=True)
class LinearFit:
    slope: float  # W per bit/s
    intercept: float  # W
    n: int

    def __call__(self, load: float) -> float:
        return self.intercept + self.slope * load


@dataclass
class CrossoverReport:
    points: list
    fit: dict  # mode -> LinearFit or None
    crossover_bps: Optional[float]
    savings: dict = field(default_factory=dict)  # load -> savings_percent(HCM, LCM)

    @property
    def peak_saving(self) -> float:
        return max(self.savings.values())

    def power(self, load: float, mode: str) -> float:
        """Measured power where the run was unsaturated, else the fit value."""
        for p in self.points:
            if p.offered_bps == load and p.mode == mode and not p.saturated:
                return p.avg_watts
        return self.fit[mode](load)


def parse_loads(text: str) -> list:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"load range must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("load count must be >= 1")
        if count == 1:
            return [start]
        return [float(x) for x in np.linspace(start, stop, count)]
    return [float(x) for x in text.split(",") if x.strip()]


def _fit(points) -> Optional[LinearFit]:
    xs = [p.offered_bps for p in points if not p.saturated]
    ys = [p.avg_watts for p in points if not p.saturated]
    if len(xs) < 2:
        return None
    slope, intercept = np.polyfit(np.asarray(xs), np.asarray(ys), 1)
    return LinearFit(float(slope), float(intercept), len(xs))


def crossover_study(loads: Sequence[float], profile: PowerProfile, lcm: PhyConfig = LCM_DEFAULT,
                    hcm: PhyConfig = HCM_DEFAULT, sim: Optional[SimConfig] = None,
                    packet_bytes: int = CROSSOVER_PACKET_BYTES) -> CrossoverReport:
    """Simulate CBR downlink at each load in both fixed modes and fit lines."""
    if not loads:
        raise ValueError("at least one load is needed")
    sim = sim or SimConfig(sim_duration=10_000_000)
    points = []
    for load in loads:
        for mode in ("LCM", "HCM"):
            flow = FlowSpec(FlowKind.CBR, float(load), packet_bytes, Direction.DL)
            scenario = ScenarioSpec(ap=ApSpec(mode=mode, lcm_phy=lcm, hcm_phy=hcm, flows=(("sta", flow),)),
                                    stations=(StationSpec("sta"),))
            report = run(sim, scenario)
            delivered = report.flows[0].throughput_bps
            points.append(CrossoverPoint(float(load), mode, report.average_power("ap", profile), delivered,
                                         delivered < SATURATION_RATIO * load))
    fits = {m: _fit([p for p in points if p.mode == m]) for m in ("LCM", "HCM")}
    cross = None
    fl, fh = fits["LCM"], fits["HCM"]
    if fl is not None and fh is not None and fl.slope != fh.slope:
        cross = (fh.intercept - fl.intercept) / (fl.slope - fh.slope)
    rep = CrossoverReport(points, fits, cross)
    for load in loads:
        try:
            rep.savings[float(load)] = savings_percent(rep.power(load, "HCM"), rep.power(load, "LCM"))
        except TypeError:
            pass  # no fit to fall back on for a saturated point
    return rep


def write_crossover_csv(report: CrossoverReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["load_bps", "mode", "watts", "fit_watts", "delivered_bps", "saturated"])
        for p in report.points:
            fit = report.fit[p.mode]
            w.writerow([repr(p.offered_bps), p.mode, repr(p.avg_watts), "" if fit is None else repr(fit(p.offered_bps)),
                        repr(p.delivered_bps), int(p.saturated)])


# --- campus study -------------------------------------------------------------

class Baseline(enum.Enum):
    STATIC_HCM = "StaticHCM"


@dataclass(frozen=True)
class CampusPolicy:
    mode_threshold_bps: float = 30e6
    doze_fraction: float = 0.5
    baseline: Baseline = Baseline.STATIC_HCM
    include_beacons: bool = True
    beacon_interval_us: int = 102_400
    beacon_bytes: int = 200

    def __post_init__(self):
        if not self.mode_threshold_bps > 0:
            raise ValueError("mode threshold must be positive")
        if not 0.0 <= self.doze_fraction <= 1.0:
            raise ValueError("doze_fraction must lie in [0, 1]")


def dozes(ap_id: str, t_start, doze_fraction: float) -> bool:
    """Deterministic choice of the idle APs that doze for a window."""
    digest = hashlib.blake2b(f"{ap_id}|{format_time(t_start)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0 ** 64 < doze_fraction


@dataclass(frozen=True)
class WindowResult:
    ap_id: str
    t_start: object
    traffic_bps: float
    mode: str
    dozing: bool
    overloaded: bool
    static_j: float
    sdps_j: float
    window: float

    @property
    def static_w(self) -> float:
        return self.static_j / self.window

    @property
    def sdps_w(self) -> float:
        return self.sdps_j / self.window

    @property
    def savings_pct(self) -> float:
        return savings_percent(self.static_j, self.sdps_j)


@dataclass(frozen=True)
class HourResult:
    hour: int
    mean_traffic: float
    mean_static_w: float
    mean_sdps_w: float
    mean_savings_pct: float


@dataclass
class CampusReport:
    windows: list
    hours: list

    def savings_over(self, hours) -> float:
        """Energy-weighted savings over the given hours; NaN if none are covered."""
        sel = [r for r in self.windows if r.t_start.hour in hours]
        if not sel:
            return math.nan
        return savings_percent(math.fsum(r.static_j for r in sel), math.fsum(r.sdps_j for r in sel))

    @property
    def daily_savings(self) -> float:
        return self.savings_over(range(24))

    @property
    def night_savings(self) -> float:
        return self.savings_over(range(0, 6))

    @property
    def office_savings(self) -> float:
        return self.savings_over(range(8, 20))

    @property
    def overloaded(self) -> int:
        return sum(r.overloaded for r in self.windows)


def _busy_energy(profile: PowerProfile, mode: str, dl_bytes: int, ul_bytes: int, rate: float, window: float):
    """Energy over one window at a fixed mode; returns (joules, overloaded)."""
    w = profile.watts
    tx, rx = dl_bytes * 8 / rate, ul_bytes * 8 / rate
    over = tx + rx > window
    if over:
        scale = window / (tx + rx)
        tx, rx = tx * scale, rx * scale
    idle = window - tx - rx
    return w[f"{mode}.tx"] * tx + w[f"{mode}.rx"] * rx + w[f"{mode}.idle"] * idle, over


def campus_study(trace: Sequence[TraceSample], policy: CampusPolicy = CampusPolicy(),
                 profile: Optional[PowerProfile] = None, lcm: PhyConfig = LCM_DEFAULT,
                 hcm: PhyConfig = HCM_DEFAULT) -> CampusReport:
    """Closed-form energy of scheduled-plus-dynamic PS against a static HCM AP."""
    if not trace:
        raise ValueError("trace is empty")
    if profile is None:
        from .power import reference_profile
        profile = reference_profile()
    r_l, r_h = data_rate(lcm), data_rate(hcm)
    beacon_s = legacy_airtime(policy.beacon_bytes) * 1e-6
    tx_l = profile.watts["lcm.tx"]
    rows = []
    for s in trace:
        window = s.window
        rate = 8 * (s.dl_bytes + s.ul_bytes) / window
        mode = "HCM" if rate > policy.mode_threshold_bps else "LCM"
        static_j, over_static = _busy_energy(profile, "hcm", s.dl_bytes, s.ul_bytes, r_h, window)
        dozing = False
        if rate == 0 and dozes(s.ap_id, s.t_start, policy.doze_fraction):
            dozing, sdps_j, over = True, profile.watts["doze"] * window, False
        elif mode == "HCM":
            sdps_j, over = static_j, over_static
        else:
            sdps_j, over = _busy_energy(profile, "lcm", s.dl_bytes, s.ul_bytes, r_l, window)
        if policy.include_beacons:
            extra = window * 1e6 / policy.beacon_interval_us * beacon_s * tx_l
            static_j += extra
            sdps_j += extra
        rows.append(WindowResult(s.ap_id, s.t_start, rate, mode, dozing, over or over_static,
                                 static_j, sdps_j, window))
    return CampusReport(rows, _hourly(rows))


def _hourly(rows) -> list:
    by_hour = {}
    for r in rows:
        by_hour.setdefault(r.t_start.hour, []).append(r)
    out = []
    for hour in sorted(by_hour):
        sel = by_hour[hour]
        n = len(sel)
        static = math.fsum(r.static_w for r in sel) / n
        sdps = math.fsum(r.sdps_w for r in sel) / n
        out.append(HourResult(hour, math.fsum(r.traffic_bps for r in sel) / n, static, sdps,
                              savings_percent(static, sdps)))
    return out


def write_campus_csv(report: CampusReport, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_window = out_dir / "per_window.csv"
    with open(per_window, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ap_id", "t_start", "traffic_bps", "static_w", "sdps_w", "savings_pct", "mode", "dozing",
                    "overloaded"])
        for r in report.windows:
            w.writerow([r.ap_id, format_time(r.t_start), repr(r.traffic_bps), repr(r.static_w), repr(r.sdps_w),
                        repr(r.savings_pct), r.mode, int(r.dozing), int(r.overloaded)])
    daily = out_dir / "daily.csv"
    with open(daily, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "mean_traffic", "mean_static_w", "mean_sdps_w", "mean_savings_pct"])
        for h in report.hours:
            w.writerow([h.hour, repr(h.mean_traffic), repr(h.mean_static_w), repr(h.mean_sdps_w),
                        repr(h.mean_savings_pct)])
    return [per_window, daily]
