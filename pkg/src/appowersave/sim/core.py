"""Discrete-event engine: one shared channel, simplified DCF, one AP with its
stations and optional overlapping-BSS contenders.

Time is kept in integer nanoseconds internally; configuration is in
microseconds. The channel is perfect: a frame fails only when it collides or
its receiver cannot take it.
"""

from __future__ import annotations

import bisect
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import dps as D
from ..phy import ACK_AIRTIME_US, PhyConfig, frame_airtime, legacy_airtime
from ..power import PowerState, RadioActivity
from ..schedule import ScheduleTracker, StaListen, segments as schedule_segments
from ..trace import FlowSource, FlowSpec
from .dcf import DcfState, freeze_backoffs, thaw_backoffs
from .events import EventKind, EventQueue
from .report import Collision, FlowStats, FrameRecord, SimReport
from .scenario import ScenarioSpec, SimConfig

NS = 1000  # per us

_LISTENING = (PowerState.DOZE, PowerState.LISTEN)


def _ns(us: float) -> int:
    return int(round(us * NS))


@dataclass
class _Packet:
    flow: int
    dst: str
    created: int
    nbytes: int


class _Flow:
    def __init__(self, fid: str, src: str, dst: str, spec: FlowSpec, rng: random.Random):
        self.fid, self.src, self.dst, self.spec = fid, src, dst, spec
        self.source = FlowSource(spec, rng)
        self.delivered = 0
        self.delivered_bytes = 0
        self.dropped = 0
        self.latencies = []


class _Device:
    def __init__(self, name: str, kind: str, config: SimConfig, seed: int):
        self.name = name
        self.kind = kind  # ap, sta, obss
        self.rng = random.Random(f"{seed}:{name}")
        self.dcf = DcfState(cw=config.cwmin, cwmin=config.cwmin, cwmax=config.cwmax, in_bss=kind != "obss")
        self.flows = []
        self.queue = deque()
        self.arrival_armed = False
        self.states = []  # (t, PowerState, mode)
        self.acts = []  # (start, end, RadioActivity)
        # station fields
        self.legacy = False
        self.dps_capable = False
        self.sta_id = 0
        self.wait_tf = False
        self.icf = None
        self.listen_interval = 1
        # AP / OBSS fields
        self.tf_queue = deque()
        self.phy: Optional[PhyConfig] = None

    def log_state(self, t: int, state: PowerState, mode: Optional[str]) -> None:
        if self.states and self.states[-1][1:] == (state, mode):
            return
        if self.states and self.states[-1][0] == t:
            self.states[-1] = (t, state, mode)
        else:
            self.states.append((t, state, mode))

    def act(self, start: int, end: int, activity: RadioActivity) -> None:
        if self.acts and start < self.acts[-1][1]:
            start = self.acts[-1][1]
        if start < end:
            self.acts.append((start, end, activity))


@dataclass
class _Exchange:
    start: int
    end: int
    kind: str  # data, icf, tf, beacon, collision
    devices: tuple
    intents: tuple = ()
    decision: object = None


@dataclass
class _Intent:
    dev: _Device
    kind: str  # data, icf, tf
    dst: str
    first_air: int  # ns of the initiating frame
    total: int  # ns of the whole exchange on success
    packet: Optional[_Packet] = None
    phy: Optional[PhyConfig] = None
    mode: Optional[str] = None
    icf: Optional[D.IcfFrame] = None
    tf_sta: Optional[_Device] = None
    tf_packet: Optional[_Packet] = None


class Simulator:
    def __init__(self, config: SimConfig, scenario: ScenarioSpec):
        scenario.check(config)
        self.cfg = config
        self.spec = scenario
        self.end = _ns(config.sim_duration)
        self.slot = _ns(config.slot)
        self.sifs = _ns(config.sifs)
        self.difs = _ns(config.difs)
        self.pifs = self.sifs + self.slot
        self.ack = _ns(ACK_AIRTIME_US)
        self.icr_air = _ns(legacy_airtime(len(D.encode_icr(D.IcrFrame(0, D.Capabilities(20, 1, 0), 0)))))
        self.tf_air = _ns(legacy_airtime(len(D.encode_tf(D.TriggerFrame(0, 0, D.Capabilities(20, 1, 0))))))
        self.beacon_air = _ns(legacy_airtime(config.beacon_bytes))
        self.q = EventQueue()
        self.now = 0

        seed = config.seed
        ap_spec = scenario.ap
        self.ap = _Device(ap_spec.name, "ap", config, seed)
        self.stations = {}
        for i, s in enumerate(scenario.stations, 1):
            d = _Device(s.name, "sta", config, seed)
            d.legacy, d.dps_capable, d.sta_id = s.legacy, s.dps_capable, i
            d.listen_interval = s.listen_interval
            self.stations[s.name] = d
        self.by_id = {d.sta_id: d for d in self.stations.values()}
        self.obss = {}
        for o in scenario.obss:
            d = _Device(o.name, "obss", config, seed)
            d.phy = o.phy
            # neighbours never doze; the mode only picks the profile column
            wide = o.phy.bandwidth * o.phy.nss > ap_spec.lcm_phy.bandwidth * ap_spec.lcm_phy.nss
            d.log_state(0, PowerState.FULL_CAPABILITIES, "HCM" if wide else "LCM")
            self.obss[o.name] = d
        self.devices = [self.ap] + list(self.stations.values()) + list(self.obss.values())
        self.named = {d.name: d for d in self.devices}

        self.flows = []
        for dst, spec in ap_spec.flows:
            self._add_flow(self.ap, dst, spec, seed)
        for s in scenario.stations:
            for spec in s.flows:
                self._add_flow(self.stations[s.name], self.ap.name, spec, seed)
        for o in scenario.obss:
            for spec in o.flows:
                self._add_flow(self.obss[o.name], f"{o.name}.peer", spec, seed)

        # ICF each DPS-capable station would send
        pad = D.required_padding(ap_spec.transition_delay_up, ap_spec.lcm_phy)
        hcm_caps = D.Capabilities.of(ap_spec.hcm_phy)
        for s in scenario.stations:
            if s.dps_capable:
                d = self.stations[s.name]
                ll = any(f.traffic_class.value == "LL" for f in s.flows)
                d.icf = D.IcfFrame(d.sta_id, hcm_caps, s.icf_explicit_duration, s.icf_inactivity_timeout,
                                   ll_flag=ll, padding_len=pad)
        self.icf_air = _ns(frame_airtime(D.ICF_BODY_LEN + pad + 4, ap_spec.lcm_phy))

        # DPS state machine
        self.policy = ap_spec.dps_policy
        self.dps = None
        if ap_spec.mode == "DPS":
            self.dps = D.ApModeState(max_caps=hcm_caps, lcm_caps=D.Capabilities.of(ap_spec.lcm_phy),
                                     transition_delay_up=ap_spec.transition_delay_up,
                                     transition_delay_down=ap_spec.transition_delay_down)
        self.dps_token = 0
        self.dps_postponed = False

        # schedule
        self.tracker = ScheduleTracker(ap_spec.schedule) if ap_spec.schedule else None
        self.steps = []  # (t_ns, scheduled state)
        self.steps_token = 0

        # medium
        self.busy = False
        self.current: Optional[_Exchange] = None
        self.idle_since = 0
        self.armed_at = None
        self.bo_token = 0
        self.beacon_pending = None  # TBTT index awaiting transmission

        # logs
        self.collisions = []
        self.frames = []
        self.beacons = []
        self.conflicts = []
        self.activations = []

        self.ap_sched = PowerState.FULL_CAPABILITIES
        self.ap_regime: Optional[str] = None
        self.ap_state = PowerState.FULL_CAPABILITIES

    # --- setup helpers -----------------------------------------------------

    def _add_flow(self, dev: _Device, dst: str, spec: FlowSpec, seed: int) -> None:
        fid = f"{dev.name}->{dst}#{len(dev.flows)}"
        flow = _Flow(fid, dev.name, dst, spec, random.Random(f"{seed}:{fid}"))
        dev.flows.append(len(self.flows))
        self.flows.append(flow)

    # --- AP regime ---------------------------------------------------------

    def _regime_of(self, s: PowerState):
        """(power state or None when DPS decides, operating regime or None)."""
        ap = self.spec.ap
        if ap.mode == "DPS":
            if ap.sdps_type is not None:
                if s is PowerState.FULL_CAPABILITIES:
                    phase = D.SchedulePhase.SP
                elif s is PowerState.DOZE:
                    phase = D.SchedulePhase.DOZE
                else:
                    phase = D.SchedulePhase.PS_PERIOD
                b = D.combined_mode(phase, ap.sdps_type)
                if b is D.Behavior.FULL_CAPABILITIES:
                    return PowerState.FULL_CAPABILITIES, "HCM"
                if b is D.Behavior.SDPS_ACTIVE:
                    return None, "DPS"
                return PowerState.DOZE, None
            if s in (PowerState.REDUCED_CAPABILITIES, PowerState.FULL_CAPABILITIES):
                return None, "DPS"
            return s, None
        if s is PowerState.FULL_CAPABILITIES:
            return s, ap.mode
        if s is PowerState.REDUCED_CAPABILITIES:
            return s, "LCM"
        return s, None

    @property
    def ap_mode(self) -> Optional[str]:
        if self.ap_regime == "DPS":
            return self.dps.mode.value
        return self.ap_regime

    def _phy(self, mode: str) -> PhyConfig:
        return self.spec.ap.hcm_phy if mode == "HCM" else self.spec.ap.lcm_phy

    def _apply_sched_state(self, s: PowerState) -> None:
        t = self.now
        old_state, old_regime = self.ap_state, self.ap_regime
        state, regime = self._regime_of(s)
        self.ap_sched = s
        if regime == "DPS" and old_regime != "DPS":
            self._reset_dps()
        self.ap_regime = regime
        if state is None:
            state = PowerState.FULL_CAPABILITIES if self.dps.mode is D.Mode.HCM else PowerState.REDUCED_CAPABILITIES
        self.ap_state = state
        self._log_ap()

        was_doze = old_state is PowerState.DOZE
        now_doze = state is PowerState.DOZE
        in_bss = [d.dcf for d in self.devices if d.kind != "obss"]
        obss = [d.dcf for d in self.devices if d.kind == "obss"]
        if now_doze and not was_doze:
            if self.cfg.freeze_in_bss:
                freeze_backoffs(in_bss, t, self.slot)
            if self.cfg.obss_freeze:
                freeze_backoffs(obss, t, self.slot, obss_freeze=True)
        elif was_doze and not now_doze:
            resume = None if self.busy else t + self.difs
            thaw_backoffs(in_bss + obss, resume)
        # the AP's own counter stands still while it only listens
        if state is PowerState.LISTEN and not self.ap.dcf.frozen:
            self.ap.dcf.settle(t, self.slot)
            self.ap.dcf.frozen = True
        elif state is not PowerState.LISTEN and old_state is PowerState.LISTEN and not now_doze:
            self.ap.dcf.frozen = False
        self._unblock_all(wake=was_doze and not now_doze)
        if regime == "DPS":
            self._dps_arm()

    def _reset_dps(self) -> None:
        st = self.dps
        st.mode, st.switch_to, st.switch_at = D.Mode.LCM, None, None
        st.hcm_expiry = st.inactivity_timeout = st.granted = None
        st.pending.clear()
        self.ap.tf_queue.clear()
        for d in self.stations.values():
            d.wait_tf = False

    def _log_ap(self) -> None:
        t = self.now
        mode = self.ap_mode if self.ap_state in (PowerState.REDUCED_CAPABILITIES, PowerState.FULL_CAPABILITIES) else None
        self.ap.log_state(t, self.ap_state, mode)
        for d in self.stations.values():
            if d.legacy:
                d.log_state(t, PowerState.FULL_CAPABILITIES, self.ap_mode or "LCM")
            elif self.ap_state is PowerState.DOZE:
                d.log_state(t, PowerState.DOZE, None)
            else:
                d.log_state(t, PowerState.FULL_CAPABILITIES, self.ap_mode or "LCM")

    def _until(self, t: int, ok) -> int:
        """First schedule step after ``t`` whose state fails ``ok``."""
        i = bisect.bisect_right(self.steps, (t, 99))
        while i < len(self.steps):
            if not ok(self.steps[i][1]):
                return self.steps[i][0]
            i += 1
        return math.inf

    def _can_initiate(self, s: PowerState) -> bool:
        return self._regime_of(s)[1] is not None

    @staticmethod
    def _acks(s: PowerState) -> bool:
        return s not in _LISTENING

    def _rebuild_steps(self, start: int, schedule) -> None:
        kept = [st for st in self.steps if st[0] < start]
        segs = schedule_segments(schedule, start // NS, max(start // NS + 1, self.end // NS))
        new = [(_ns(a), s) for a, _, s, _ in segs]
        if kept and new and kept[-1][1] == new[0][1]:
            new = new[1:]
        self.steps = kept + new
        self.steps_token += 1
        for t, s in self.steps:
            if t > self.now and t < self.end:
                self.q.push(t, self.ap.name, EventKind.STATE_CHANGE, (self.steps_token, s))

    # --- flows and queues --------------------------------------------------

    def _refill(self, dev: _Device) -> None:
        now = self.now
        new = []
        for fi in dev.flows:
            f = self.flows[fi]
            src = f.source
            if src.saturated:
                continue
            while src.peek() <= now:
                new.append((src.pop(), fi))
        new.sort()
        for t, fi in new:
            f = self.flows[fi]
            if len(dev.queue) >= self.cfg.queue_limit:
                f.dropped += 1
            else:
                dev.queue.append(_Packet(fi, f.dst, t, f.spec.packet_bytes))
        if not dev.queue:
            for fi in dev.flows:
                f = self.flows[fi]
                if f.source.saturated and f.source.peek() <= now:
                    dev.queue.append(_Packet(fi, f.dst, now, f.spec.packet_bytes))
                    break

    def _next_arrival(self, dev: _Device):
        times = [self.flows[fi].source.peek() for fi in dev.flows]
        return min(times) if times else None

    def _wants(self, dev: _Device) -> bool:
        if dev.kind == "ap":
            return bool(dev.queue or (dev.tf_queue and self.ap_mode == "HCM"))
        if dev.kind == "sta" and dev.wait_tf:
            return False
        return bool(dev.queue)

    def _ensure_arrival(self, dev: _Device) -> None:
        if dev.queue or dev.arrival_armed:
            return
        t = self._next_arrival(dev)
        if t is not None and t < self.end:
            dev.arrival_armed = True
            self.q.push(max(t, self.now), dev.name, EventKind.FRAME_ARRIVAL)

    # --- contention --------------------------------------------------------

    def _count_from(self, dev: _Device, at: Optional[int] = None) -> None:
        if self.busy:
            return
        base = self.idle_since + self.difs
        t = max(self.now, base, at or 0)
        start = base + -(-(t - base) // self.slot) * self.slot
        dev.dcf.resume(start)

    def _activate(self, dev: _Device) -> None:
        """Give a device with something to send a running backoff."""
        if self.current is not None and dev in self.current.devices:
            return
        if not self._wants(dev):
            return
        if dev.dcf.backoff_slots is None:
            dev.dcf.draw(dev.rng)
        if not dev.dcf.counting:
            self._count_from(dev)

    def _unblock_all(self, wake: bool = False) -> None:
        for d in self.devices:
            if d.dcf.blocked:
                d.dcf.blocked = False
            if d.dcf.counting or d.dcf.frozen:
                continue
            if wake and d.kind != "obss":
                if self._wants(d) and d.dcf.backoff_slots is None:
                    d.dcf.draw(d.rng)
                if d.dcf.backoff_slots is not None:
                    self._count_from(d, self.now + self.difs)
            else:
                self._activate(d)
        self._arm()

    def _arm(self) -> None:
        best = None
        for d in self.devices:
            e = d.dcf.expiry(self.slot)
            if e is not None and (best is None or e < best):
                best = e
        if best == self.armed_at:
            return
        self.bo_token += 1
        self.armed_at = best
        if best is not None and best < self.end:
            self.q.push(best, "medium", EventKind.BACKOFF_EXPIRY, self.bo_token)

    def _settle_all(self, t: int) -> None:
        for d in self.devices:
            d.dcf.settle(t, self.slot)
        self.armed_at = None
        self.bo_token += 1

    # --- intents -----------------------------------------------------------

    def _data_exchange(self, dev, pkt, phy, mode) -> _Intent:
        air = _ns(frame_airtime(pkt.nbytes, phy))
        return _Intent(dev, "data", pkt.dst, air, air + self.sifs + self.ack, pkt, phy, mode)

    def _intent(self, dev: _Device, t: int):
        """What ``dev`` would start at ``t``; None if it must hold back, and
        the latest start time that would have fitted (for the guard rule)."""
        if dev.kind == "obss":
            pkt = dev.queue[0]
            mode = "HCM" if dev.phy.bandwidth * dev.phy.nss > 20 else "LCM"
            return self._data_exchange(dev, pkt, dev.phy, mode), None

        if dev.kind == "ap":
            if self.ap_regime is None:
                return None, None
            limit = self._until(t, self._can_initiate)
            mode = self.ap_mode
            if dev.tf_queue and mode == "HCM":
                tf = dev.tf_queue[0]
                sta = self.by_id[tf.sta_id]
                self._refill(sta)
                total, pkt = self.tf_air, None
                if sta.queue:
                    pkt = sta.queue[0]
                    total += self.sifs + _ns(frame_airtime(pkt.nbytes, self._phy("HCM"))) + self.sifs + self.ack
                it = _Intent(dev, "tf", sta.name, self.tf_air, total, mode="HCM", tf_sta=sta, tf_packet=pkt)
            elif dev.queue:
                it = self._data_exchange(dev, dev.queue[0], self._phy(mode), mode)
            else:
                return None, None
            if t + it.total > limit:
                return None, limit - it.total
            return it, None

        # station
        pkt = dev.queue[0]
        if dev.legacy:
            return self._data_exchange(dev, pkt, self._phy(self.ap_mode or "LCM"), self.ap_mode or "LCM"), None
        if not self._acks(self.ap_state):
            return None, None
        limit = self._until(t, self._acks)
        if self.ap_regime == "DPS" and dev.dps_capable:
            st = self.dps
            if st.mode is D.Mode.HCM:
                it = self._data_exchange(dev, pkt, self._phy("HCM"), "HCM")
            elif st.switch_to is D.Mode.HCM:
                return None, None
            else:
                it = _Intent(dev, "icf", self.ap.name, self.icf_air,
                             self.icf_air + self.sifs + self.icr_air, pkt, self._phy("LCM"), "LCM", icf=dev.icf)
        else:
            mode = self.ap_mode or "LCM"
            it = self._data_exchange(dev, pkt, self._phy(mode), mode)
        if t + it.total > limit:
            return None, limit - it.total
        return it, None

    # --- exchanges ---------------------------------------------------------

    def _on_backoff_expiry(self, token: int) -> None:
        if token != self.bo_token or self.busy:
            return
        t = self.now
        self.armed_at = None
        ready = [d for d in self.devices if d.dcf.expiry(self.slot) == t]
        intents = []
        for d in ready:
            d.dcf.settle(t, self.slot)
            self._refill(d)
            if not self._wants(d):
                d.dcf.backoff_slots = None
                continue
            it, guard = self._intent(d, t)
            if it is None:
                if guard is not None and self._freezes(d) and guard < t:
                    d.dcf.backoff_slots = max(1, -(-(t - guard) // self.slot))
                d.dcf.blocked = True
            else:
                intents.append(it)
        if not intents:
            self._arm()
            return
        self._settle_all(t)
        self.busy = True
        if len(intents) == 1:
            self._start_single(intents[0], t)
        else:
            self._start_collision(intents, t)

    def _freezes(self, d: _Device) -> bool:
        return self.cfg.freeze_in_bss if d.kind != "obss" else self.cfg.obss_freeze

    def _start_collision(self, intents, t: int) -> None:
        end = t + max(it.first_air for it in intents)
        txers = {it.dev.name for it in intents}
        for it in intents:
            it.dev.act(t, t + it.first_air, RadioActivity.TX)
            self.frames.append(FrameRecord(t, t + it.first_air, it.dev.name, it.dst, it.kind, it.mode, False,
                                           "collision"))
        for name in sorted({it.dst for it in intents} - txers):
            rx = self.named.get(name)
            if rx is not None and self._awake(rx):
                rx.act(t, end, RadioActivity.RX)
        devs = tuple(it.dev for it in intents)
        self.collisions.append(Collision(t, len(intents), tuple(sorted(txers))))
        self.current = _Exchange(t, end, "collision", devs, tuple(intents))
        self.q.push(end, "medium", EventKind.TX_END)

    def _awake(self, dev: _Device) -> bool:
        if dev.kind == "ap":
            return self.ap_state is not PowerState.DOZE
        if dev.kind == "sta" and not dev.legacy:
            return self.ap_state is not PowerState.DOZE
        return True

    def _start_single(self, it: _Intent, t: int) -> None:
        dev, sifs = it.dev, self.sifs
        ex = _Exchange(t, t + it.first_air, it.kind, (dev,), (it,))
        dev.act(t, t + it.first_air, RadioActivity.TX)
        if it.kind == "data":
            rx = self.named.get(it.dst)
            ok = True
            if rx is self.ap:
                ok = self._acks(self.ap_state)
                if self.ap_state is PowerState.LISTEN:
                    rx.act(t, t + it.first_air, RadioActivity.RX)
            elif rx is not None:
                rx.act(t, t + it.first_air, RadioActivity.RX)
            self.frames.append(FrameRecord(t, t + it.first_air, dev.name, it.dst, "data", it.mode, ok))
            if ok:
                ack0 = t + it.first_air + sifs
                if rx is not None:
                    rx.act(ack0, ack0 + self.ack, RadioActivity.TX)
                    ex.devices = (dev, rx)
                dev.act(ack0, ack0 + self.ack, RadioActivity.RX)
                ex.end = ack0 + self.ack
            ex.decision = ok
        elif it.kind == "icf":
            ap = self.ap
            icf_end = t + it.first_air
            ap.act(t, icf_end, RadioActivity.RX)
            decided = icf_end + sifs + self.icr_air
            decision = D.on_icf(self.dps, D.encode_icf(it.icf), self.policy, -(-decided // NS))
            ex.decision = decision
            reply = self.icr_air if isinstance(decision, (D.SwitchNow, D.AlreadyHcm)) else self.ack
            r0 = icf_end + sifs
            ap.act(r0, r0 + reply, RadioActivity.TX)
            dev.act(r0, r0 + reply, RadioActivity.RX)
            ex.end = r0 + reply
            ex.devices = (dev, ap)
            self.frames.append(FrameRecord(t, icf_end, dev.name, ap.name, "icf", "LCM", True))
            if reply == self.icr_air:
                self.frames.append(FrameRecord(r0, ex.end, ap.name, dev.name, "icr", None, True,
                                               f"effective_at={decision.icr.effective_at}"))
            self._dps_arm()
        elif it.kind == "tf":
            sta = it.tf_sta
            tf_end = t + self.tf_air
            sta.act(t, tf_end, RadioActivity.RX)
            self.frames.append(FrameRecord(t, tf_end, dev.name, sta.name, "tf", None, True))
            ex.end = tf_end
            ex.devices = (dev, sta)
            if it.tf_packet is not None:
                d0 = tf_end + sifs
                air = _ns(frame_airtime(it.tf_packet.nbytes, self._phy("HCM")))
                sta.act(d0, d0 + air, RadioActivity.TX)
                dev.act(d0, d0 + air, RadioActivity.RX)
                a0 = d0 + air + sifs
                dev.act(a0, a0 + self.ack, RadioActivity.TX)
                sta.act(a0, a0 + self.ack, RadioActivity.RX)
                ex.end = a0 + self.ack
                self.frames.append(FrameRecord(d0, d0 + air, sta.name, dev.name, "data", "HCM", True, "triggered"))
        self.current = ex
        self.q.push(ex.end, "medium", EventKind.TX_END)

    def _start_beacon(self, t: int) -> None:
        ap = self.ap
        end = t + self.beacon_air
        ok_until = self._until(t, lambda s: s.can_transmit)
        if not self.ap_state.can_transmit or end > ok_until:
            self.conflicts.append((t, f"Beacon {self.beacon_pending} could not be sent in {self.ap_state.name}"))
            self.beacon_pending = None
            return False
        self.busy = True
        self._settle_all(t)
        ap.act(t, end, RadioActivity.TX)
        for d in self.stations.values():
            if self._awake(d):
                d.act(t, end, RadioActivity.RX)
        if self.tracker is not None:
            self.beacons.append((t, self.tracker.advertised.version, self.tracker.active_at(t // NS).version))
        else:
            self.beacons.append((t, None, None))
        self.frames.append(FrameRecord(t, end, ap.name, "*", "beacon", None, True))
        self.current = _Exchange(t, end, "beacon", (ap,))
        self.beacon_pending = None
        self.q.push(end, "medium", EventKind.TX_END)
        return True

    def _on_tx_end(self) -> None:
        ex, t = self.current, self.now
        self.current = None
        if ex.kind == "collision":
            for it in ex.intents:
                self._fail(it.dev)
        elif ex.kind == "data":
            it = ex.intents[0]
            if ex.decision:
                self._deliver(it.dev, t)
                it.dev.dcf.on_success()
                if self.ap in ex.devices and self.ap_regime == "DPS":
                    D.record_exchange(self.dps, -(-t // NS))
            else:
                self._fail(it.dev)
        elif ex.kind == "icf":
            it = ex.intents[0]
            it.dev.dcf.on_success()
            if isinstance(ex.decision, D.Deferred):
                it.dev.wait_tf = True
        elif ex.kind == "tf":
            it = ex.intents[0]
            sta = it.tf_sta
            self.ap.tf_queue.popleft()
            sta.wait_tf = False
            if it.tf_packet is not None:
                self._deliver(sta, t)
            it.dev.dcf.on_success()
            if self.ap_regime == "DPS":
                D.record_exchange(self.dps, -(-t // NS))

        for d in ex.devices:
            self._refill(d)
            self._ensure_arrival(d)
        self.busy = False
        self.idle_since = t
        if self.dps_postponed:
            self.dps_postponed = False
            self._dps_fire()
        if self.beacon_pending is not None:
            self.busy = True
            self.q.push(t + self.pifs, self.ap.name, EventKind.TX_START, "beacon")
            return
        for d in self.devices:
            if d.dcf.backoff_slots is not None and not d.dcf.counting:
                self._count_from(d)
            else:
                self._activate(d)
        self._arm()

    def _deliver(self, dev: _Device, t: int) -> None:
        pkt = dev.queue.popleft()
        if t > self.end:
            return
        f = self.flows[pkt.flow]
        f.delivered += 1
        f.delivered_bytes += pkt.nbytes
        f.latencies.append((t - pkt.created) / NS)

    def _fail(self, dev: _Device) -> None:
        if dev.dcf.on_failure(self.cfg.retry_limit):
            pkt = dev.queue.popleft()
            self.flows[pkt.flow].dropped += 1

    # --- DPS timers --------------------------------------------------------

    def _dps_arm(self) -> None:
        if self.dps is None or self.ap_regime != "DPS":
            return
        deadline = D.next_deadline(self.dps, self.policy)
        self.dps_token += 1
        if deadline is not None:
            at = max(_ns(deadline), self.now)
            if at < self.end:
                self.q.push(at, self.ap.name, EventKind.TIMER, ("dps", self.dps_token))

    def _dps_fire(self) -> None:
        if self.ap_regime != "DPS":
            return
        before = self.dps.mode
        D.tick(self.dps, self.now // NS, self.policy)
        if self.dps.mode is not before:
            self._on_mode_change()
        self._dps_arm()

    def _on_mode_change(self) -> None:
        self.ap_state = (PowerState.FULL_CAPABILITIES if self.dps.mode is D.Mode.HCM
                         else PowerState.REDUCED_CAPABILITIES)
        self._log_ap()
        if self.dps.mode is D.Mode.HCM:
            self.ap.tf_queue.extend(D.drain_pending(self.dps, self.now // NS))
        else:
            self.ap.tf_queue.clear()
            for d in self.stations.values():
                d.wait_tf = False
        self._unblock_all()

    # --- main loop ---------------------------------------------------------

    def run(self) -> SimReport:
        if self.tracker is not None:
            self._rebuild_steps(0, self.tracker.latest)
            first = self.steps[0][1] if self.steps else self.tracker.latest.default_state
        else:
            first = PowerState.FULL_CAPABILITIES
        self._apply_sched_state(first)
        for at, sched in self.spec.ap.schedule_updates:
            self.q.push(_ns(at), self.ap.name, EventKind.TIMER, ("schedule", sched))
        if self.beacon_interval_ns <= self.end:
            self.q.push(self.beacon_interval_ns, self.ap.name, EventKind.BEACON_DUE, 1)
        for d in self.devices:
            self._refill(d)
            self._ensure_arrival(d)
            self._activate(d)
        self._arm()

        while len(self.q) and self.q.peek_time() < self.end:
            ev = self.q.pop()
            self.now = ev.time
            kind = ev.kind
            if kind is EventKind.BACKOFF_EXPIRY:
                self._on_backoff_expiry(ev.data)
            elif kind is EventKind.TX_END:
                self._on_tx_end()
            elif kind is EventKind.FRAME_ARRIVAL:
                dev = self.named[ev.target]
                dev.arrival_armed = False
                self._refill(dev)
                self._ensure_arrival(dev)
                if not dev.dcf.blocked:
                    self._activate(dev)
                self._arm()
            elif kind is EventKind.BEACON_DUE:
                self._on_beacon_due(ev.data)
            elif kind is EventKind.TX_START:
                if not self._start_beacon(self.now):
                    self.busy = False
                    self.idle_since = self.now
                    self._unblock_all()
            elif kind is EventKind.STATE_CHANGE:
                token, state = ev.data
                if token == self.steps_token:
                    self._on_state_change(state)
            elif kind is EventKind.TIMER:
                what, arg = ev.data
                if what == "dps":
                    if arg == self.dps_token:
                        if self.current is not None and self.ap in self.current.devices:
                            self.dps_postponed = True
                        else:
                            self._dps_fire()
                elif what == "schedule":
                    self._propose(arg)
        return self._report()

    @property
    def beacon_interval_ns(self) -> int:
        return _ns(self.cfg.beacon_interval)

    def _on_beacon_due(self, k: int) -> None:
        nxt = (k + 1) * self.beacon_interval_ns
        if nxt <= self.end:
            self.q.push(nxt, self.ap.name, EventKind.BEACON_DUE, k + 1)
        self.beacon_pending = k
        if self.busy:
            return
        if not self._start_beacon(self.now):
            self._arm()

    def _on_state_change(self, state: PowerState) -> None:
        if not self.busy:
            self._settle_all(self.now)
        self._apply_sched_state(state)
        if not self.busy:
            for d in self.devices:
                if d.dcf.backoff_slots is not None and not d.dcf.counting:
                    self._count_from(d)
        self._arm()

    def _propose(self, sched) -> None:
        stas = [StaListen(listen_interval=d.listen_interval, legacy=d.legacy) for d in self.stations.values()]
        now_us = self.now // NS
        activation = self.tracker.propose(sched, stas, now_us, self.cfg.beacon_interval)
        self.activations.append((self.now, sched.version, _ns(activation)))
        self._rebuild_steps(_ns(activation), sched)

    # --- report ------------------------------------------------------------

    def _timeline(self, dev: _Device):
        out = []
        states = [(t, s, m) for t, s, m in dev.states if t < self.end]
        acts = [(a, min(b, self.end), x) for a, b, x in dev.acts if a < self.end]
        j = 0
        for i, (t0, state, mode) in enumerate(states):
            t1 = states[i + 1][0] if i + 1 < len(states) else self.end
            idle = RadioActivity.OFF if state is PowerState.DOZE else RadioActivity.IDLE
            cur = t0
            while j < len(acts) and acts[j][1] <= t0:
                j += 1
            k = j
            while k < len(acts) and acts[k][0] < t1:
                a, b, x = acts[k]
                a, b = max(a, t0), min(b, t1)
                if a > cur:
                    out.append((cur, a, state, mode, idle))
                if b > a:
                    out.append((a, b, state, mode, x))
                cur = max(cur, b)
                k += 1
            if cur < t1:
                out.append((cur, t1, state, mode, idle))
        merged = []
        for seg in out:
            if merged and merged[-1][1] == seg[0] and merged[-1][2:] == seg[2:]:
                merged[-1] = (merged[-1][0], seg[1]) + seg[2:]
            else:
                merged.append(seg)
        return merged

    def _report(self) -> SimReport:
        timelines = {d.name: self._timeline(d) for d in self.devices}
        flows = []
        for f in sorted(self.flows, key=lambda f: f.fid):
            span = max(self.end - _ns(f.spec.start * 1e6), 1) / 1e9
            lat = np.asarray(f.latencies, dtype=float)
            pct = (np.percentile(lat, [50, 95, 99]).tolist() if lat.size else [math.nan] * 3)
            offered = 0.0 if f.source.saturated else float(f.spec.rate)
            flows.append(FlowStats(f.fid, f.src, f.dst, f.spec.direction.value, f.spec.traffic_class.value,
                                   offered, f.delivered_bytes * 8 / span, f.delivered, f.dropped, *pct))
        return SimReport(
            duration_ns=self.end,
            raw_timelines=timelines,
            flows=flows,
            event_counts=dict(sorted(self.q.counts.items())),
            collisions=self.collisions,
            frames=self.frames,
            beacons=self.beacons,
            conflicts=self.conflicts,
            activations=self.activations,
        )


def run(config: SimConfig, scenario: ScenarioSpec) -> SimReport:
    """Simulate ``scenario`` under ``config``; raises ScenarioError before any event runs."""
    return Simulator(config, scenario).run()
