import binascii

import pytest
from hypothesis import given, strategies as st

from appowersave.codec import CorruptFrameError
from appowersave.multilink import (Link, MldState, ProtocolViolation, UnknownLinkError, WakeUpFrame,
                                   WurCompanion, WurDisabledError, advance, decode_wakeup, encode_wakeup,
                                   mld_energy, note_activity, on_wakeup_frame, wur_wakeup)
from appowersave.power import PowerState, RadioActivity, StateTimeline


def mld(**kw):
    return MldState([Link(0, PowerState.FULL_CAPABILITIES), Link(1, wake_latency=200), Link(2, wake_latency=50)],
                    active_link=0, **kw)


def test_wakeup_golden_vector():
    body = bytes([0x04, 0x06, 0x00])
    crc = (binascii.crc32(body) & 0xFFFFFFFF).to_bytes(4, "little")
    assert encode_wakeup(WakeUpFrame.for_links(1, 2)) == body + crc


@given(st.integers(1, 0xFFFF))
def test_wakeup_roundtrip(bitmap):
    f = WakeUpFrame(bitmap)
    assert decode_wakeup(encode_wakeup(f)) == f


@given(st.integers(1, 0xFFFF), st.integers(0, 3 * 8 - 1))
def test_wakeup_bit_flip_detected(bitmap, bit):
    raw = bytearray(encode_wakeup(WakeUpFrame(bitmap)))
    raw[bit // 8] ^= 1 << (bit % 8)
    with pytest.raises(CorruptFrameError):
        decode_wakeup(bytes(raw))


def test_wakeup_frame_validation():
    with pytest.raises(ValueError):
        WakeUpFrame(0)
    with pytest.raises(ValueError):
        WakeUpFrame(1 << 16)
    assert WakeUpFrame.for_links(3, 3, 0).link_ids == [0, 3]


def test_wake_only_named_links_after_latency():
    m = mld()
    assert on_wakeup_frame(m, WakeUpFrame.for_links(1), 1000) == [(1, 1200)]
    assert m.links[2].dozing
    assert advance(m, 1199) == []
    assert advance(m, 1200) == [(1, PowerState.FULL_CAPABILITIES)]
    assert m.links[2].dozing


def test_repeated_wakeup_keeps_pending_time_and_awake_links():
    m = mld()
    on_wakeup_frame(m, WakeUpFrame.for_links(1), 1000)
    assert on_wakeup_frame(m, WakeUpFrame.for_links(1, 0), 1100) == [(0, 1100), (1, 1200)]


def test_wakeup_errors():
    m = mld()
    with pytest.raises(ProtocolViolation):
        on_wakeup_frame(m, WakeUpFrame.for_links(1), 0, rx_link=1)
    with pytest.raises(UnknownLinkError):
        on_wakeup_frame(m, WakeUpFrame.for_links(5), 0)
    with pytest.raises(UnknownLinkError):
        MldState([Link(0)], active_link=3)
    with pytest.raises(ValueError):
        MldState([Link(0)], active_link=0)  # active link dozing
    with pytest.raises(ValueError):
        MldState([Link(0, PowerState.FULL_CAPABILITIES), Link(0)], active_link=0)


def test_idle_links_return_to_doze_but_active_link_stays():
    m = mld(idle_timeout=1000)
    on_wakeup_frame(m, WakeUpFrame.for_links(2), 0)
    advance(m, 50)
    note_activity(m, 2, 500)
    assert advance(m, 1499) == []
    assert advance(m, 1500) == [(2, PowerState.DOZE)]
    assert advance(m, 10**9) == []
    assert not m.links[0].dozing


def test_mld_energy_is_sum_over_links(profile):
    a, b = StateTimeline(), StateTimeline()
    a.append(PowerState.FULL_CAPABILITIES, "HCM", RadioActivity.IDLE, 1.0)
    b.append(PowerState.DOZE, None, RadioActivity.OFF, 1.0)
    w = profile.watts
    assert mld_energy({0: a, 1: b}, profile) == pytest.approx(w["hcm.idle"] + w["doze"])


def test_wur(profile):
    assert wur_wakeup(WurCompanion(wake_frame_airtime=40, pcr_wake_latency=500), 1000) == 1540
    with pytest.raises(WurDisabledError):
        wur_wakeup(WurCompanion(enabled=False), 0)
    with pytest.raises(ValueError):
        wur_wakeup(WurCompanion(pcr_wake_latency=-1), 0)
    WurCompanion().check_power(profile)
    with pytest.raises(ValueError):
        WurCompanion().check_power(profile.with_watts({"wur": 0.002}))
