import itertools
import random

import pytest
import yaml

from appowersave.phy import ACK_AIRTIME_US, HCM_DEFAULT, LCM_DEFAULT, frame_airtime
from appowersave.power import PowerState, RadioActivity
from appowersave.schedule import IntervalGroup, PowerSchedule
from appowersave.sim import (ApSpec, DcfState, EventKind, EventQueue, ObssSpec, ScenarioError, ScenarioSpec,
                             SimConfig, StationSpec, freeze_backoffs, load_scenario, parse_scenario, run,
                             thaw_backoffs)
from appowersave.trace import Direction, FlowKind, FlowSpec

NS = 1000
DOZE_SCHED = PowerSchedule(0, (IntervalGroup(2000, 100_000, 204_800, PowerState.DOZE),))


def saturated():
    return (FlowSpec(FlowKind.SATURATED, 0, 1500, Direction.UL),)


def one_sta(mode="HCM", **ap):
    return ScenarioSpec(ap=ApSpec(mode=mode, **ap), stations=(StationSpec("s1", flows=saturated()),))


# --- event queue and DCF bookkeeping ----------------------------------------

def test_event_queue_orders_by_time_then_insertion():
    rng = random.Random(0)
    for _ in range(200):
        q = EventQueue()
        items = [(rng.randint(0, 5), i) for i in range(30)]
        for t, i in items:
            q.push(t, f"d{i}", EventKind.TIMER, i)
        got = [q.pop().data for _ in items]
        assert got == [i for _, i in sorted(items)]
    assert q.counts["Timer"] == 30


def test_same_time_permutation_pop_order_is_push_order():
    for perm in itertools.permutations(range(4)):
        q = EventQueue()
        for i in perm:
            q.push(100, "x", EventKind.TIMER, i)
        assert [q.pop().data for _ in perm] == list(perm)


def test_dcf_settle_and_freeze():
    s = DcfState(cw=15, cwmin=15, cwmax=1023, backoff_slots=10, count_start=0)
    s.settle(9 * 4 + 5, 9)
    assert s.backoff_slots == 6 and not s.counting
    s.resume(100)
    obss = DcfState(cw=15, cwmin=15, cwmax=1023, in_bss=False, backoff_slots=3, count_start=0)
    frozen = freeze_backoffs([s, obss], 100 + 9 * 2, 9)
    assert frozen == [s] and s.backoff_slots == 4 and obss.counting
    assert freeze_backoffs([obss], 27, 9, obss_freeze=True) == [obss] and obss.backoff_slots == 0
    thaw_backoffs([s], 500)
    assert not s.frozen and s.count_start == 500 and s.expiry(9) == 500 + 36


def test_dcf_failure_doubles_window_and_drops():
    s = DcfState(cw=15, cwmin=15, cwmax=63)
    assert [s.on_failure(3) or s.cw for _ in range(3)] == [31, 63, 63]
    assert s.on_failure(3) is True and s.cw == 15


# --- whole runs -------------------------------------------------------------

def test_idle_ap_timeline_and_beacons():
    r = run(SimConfig(sim_duration=1_000_000), ScenarioSpec())
    assert len(r.beacons) == 9
    segs = r.raw_timelines["ap"]
    assert segs[0][0] == 0 and segs[-1][1] == 1_000_000 * NS
    assert all(a[1] == b[0] for a, b in zip(segs, segs[1:]))
    tx = [s for s in segs if s[4] is RadioActivity.TX]
    assert len(tx) == 9 and tx[0][0] == 102_400 * NS
    assert {s[2] for s in segs} == {PowerState.FULL_CAPABILITIES}
    assert r.timeline("ap").total_duration == pytest.approx(1.0)


@pytest.mark.parametrize("mode,phy", [("LCM", LCM_DEFAULT), ("HCM", HCM_DEFAULT)])
def test_single_saturated_sta_meets_dcf_bound(mode, phy):
    cfg = SimConfig(seed=1, sim_duration=2_000_000)
    r = run(cfg, one_sta(mode))
    cycle = cfg.difs + cfg.cwmin / 2 * cfg.slot + frame_airtime(1500, phy) + cfg.sifs + ACK_AIRTIME_US
    bound = 1500 * 8 / (cycle * 1e-6)
    assert abs(r.flows[0].throughput_bps - bound) / bound < 0.05


def test_determinism_and_seed_sensitivity(tmp_path):
    sc = ScenarioSpec(ap=ApSpec(schedule=DOZE_SCHED),
                      stations=tuple(StationSpec(f"s{i}", flows=saturated()) for i in range(3)))
    a = run(SimConfig(seed=5, sim_duration=300_000), sc)
    b = run(SimConfig(seed=5, sim_duration=300_000), sc)
    assert a == b
    a.write_csv(tmp_path / "a")
    b.write_csv(tmp_path / "b")
    for name in ("timelines.csv", "flows.csv", "frames.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(SimConfig(seed=6, sim_duration=300_000), sc).frames != a.frames


def doze_windows(duration_us):
    k = 0
    while 2000 + k * 204_800 < duration_us:
        start = 2000 + k * 204_800
        yield start * NS, (start + 100_000) * NS
        k += 1


def test_no_in_bss_exchange_during_doze():
    sc = ScenarioSpec(ap=ApSpec(schedule=DOZE_SCHED),
                      stations=tuple(StationSpec(f"s{i}", flows=saturated()) for i in range(4)))
    r = run(SimConfig(seed=2, sim_duration=1_000_000), sc)
    wins = list(doze_windows(1_000_000))
    for f in r.frames:
        if f.src != "ap" and f.dst != "ap":
            continue
        for a, b in wins:
            assert f.end <= a or f.start >= b, f
    for start, end, state, _, act in r.raw_timelines["ap"]:
        if state is PowerState.DOZE:
            assert act is RadioActivity.OFF


def test_obss_gets_medium_while_bss_sleeps():
    sc = ScenarioSpec(ap=ApSpec(schedule=DOZE_SCHED),
                      stations=tuple(StationSpec(f"s{i}", flows=saturated()) for i in range(3)),
                      obss=(ObssSpec("o", flows=saturated()),))
    r = run(SimConfig(seed=3, sim_duration=1_000_000), sc)
    wins = list(doze_windows(1_000_000))

    def in_doze(t):
        return any(a <= t < b for a, b in wins)

    counts = {True: [0, 0], False: [0, 0]}  # doze? -> [obss, total]
    for f in r.frames:
        if f.kind == "data" and f.ok:
            c = counts[in_doze(f.start)]
            c[0] += f.src == "o"
            c[1] += 1
    share = {k: v[0] / v[1] for k, v in counts.items() if v[1]}
    assert share[True] > share[False]
    obss_tl = r.raw_timelines["o"]
    assert obss_tl[0][0] == 0 and obss_tl[-1][1] == 1_000_000 * NS
    assert {seg[2] for seg in obss_tl} == {PowerState.FULL_CAPABILITIES}


def collided_after_wake(freeze, seeds=range(6)):
    sc = ScenarioSpec(ap=ApSpec(schedule=DOZE_SCHED),
                      stations=tuple(StationSpec(f"s{i}", flows=saturated()) for i in range(6)))
    total = 0
    for seed in seeds:
        r = run(SimConfig(seed=seed, sim_duration=1_000_000, freeze_in_bss=freeze), sc)
        wakes = [b for _, b in doze_windows(1_000_000)]
        total += sum(c.frames for c in r.collisions if any(w <= c.time < w + 10_000 * NS for w in wakes))
    return total


def test_freeze_switch_changes_post_wake_behaviour():
    assert collided_after_wake(True) != collided_after_wake(False)


def test_legacy_sta_forbids_doze_schedule():
    sc = ScenarioSpec(ap=ApSpec(schedule=DOZE_SCHED), stations=(StationSpec("old", legacy=True),))
    with pytest.raises(ScenarioError, match="legacy"):
        run(SimConfig(), sc)


def test_scenario_validation_lists_problems():
    sc = ScenarioSpec(ap=ApSpec(mode="Turbo", flows=(("ghost", saturated()[0]),)),
                      stations=(StationSpec("a"), StationSpec("a", legacy=True, dps_capable=True)))
    with pytest.raises(ScenarioError) as err:
        run(SimConfig(sifs=40), sc)
    text = str(err.value)
    for part in ("sifs", "duplicate", "Turbo", "ghost", "legacy stations cannot use DPS"):
        assert part in text


SCENARIO_YAML = """
config: {seed: 9, sim_duration_us: 200000}
ap:
  mode: DPS
  dps_policy: {kind: Defer, defer_batch_min: 2, max_defer_us: 5000}
  flows:
    - {to: a, kind: Poisson, rate_bps: 2.0e6, packet_bytes: 1200}
stations:
  - name: a
    dps_capable: true
    flows: [{kind: CBR, rate_bps: 1.0e6, packet_bytes: 1000}]
  - name: b
    dps_capable: true
    icf_grant: {explicit_duration_us: 2000}
    flows: [{kind: CBR, rate_bps: 5.0e5, packet_bytes: 500, class: LL}]
"""


def test_yaml_scenario_runs(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(SCENARIO_YAML)
    config, scenario = load_scenario(path)
    assert config.seed == 9 and scenario.ap.dps_policy.defer_batch_min == 2
    assert scenario.stations[1].icf_explicit_duration == 2000
    r = run(config, scenario)
    kinds = {f.kind for f in r.frames}
    assert {"icf", "data"} <= kinds
    assert all(f.delivered > 0 for f in r.flows)


@pytest.mark.parametrize("patch,needle", [
    ({"config": {"warp": 1}}, "unknown config"),
    ({"ap": {"schedule": {"groups": [{"duration_us": 1, "period_us": 10, "state": "Nap"}]}}}, "Nap"),
    ({"ap": {"mode": "DPS"}}, "dps_policy"),
])
def test_yaml_errors(patch, needle):
    doc = yaml.safe_load(SCENARIO_YAML)
    doc.update(patch)
    with pytest.raises(ScenarioError, match=needle):
        config, scenario = parse_scenario(doc)
        scenario.check(config)


def test_report_helpers(profile):
    r = run(SimConfig(sim_duration=100_000), one_sta())
    f = r.flows[0]
    assert r.flow(f.flow_id) is f
    with pytest.raises(KeyError):
        r.flow("nope")
    assert r.energy("ap", profile) == pytest.approx(r.average_power("ap", profile) * 0.1)
    assert r.summary()["duration_s"] == 0.1
    assert f.latency_p50_us <= f.latency_p95_us <= f.latency_p99_us
