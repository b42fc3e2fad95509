import itertools
import math

import pytest
from hypothesis import given, strategies as st

from appowersave.phy import (
    HCM_DEFAULT, LCM_DEFAULT, CapabilityMode, InvalidPhyConfig, MacOverheadParams, PhyConfig,
    check_mode_pair, data_rate, frame_airtime, is_valid, legacy_airtime, n_symbols,
)

from oracles import UNDEFINED, oracle_rate

ALL = list(itertools.product(range(10), (20, 40, 80, 160), range(1, 9), ("short", "long")))


@pytest.mark.parametrize("mcs,bw,nss,gi", [c for c in ALL if c[2] <= 2])
def test_rate_matches_table_oracle(mcs, bw, nss, gi):
    expected = oracle_rate(mcs, bw, nss, gi)
    if expected is None:
        with pytest.raises(InvalidPhyConfig):
            PhyConfig(mcs, bw, nss, gi)
    else:
        assert data_rate(PhyConfig(mcs, bw, nss, gi)) == pytest.approx(float(expected), rel=1e-12)


def test_validity_over_all_stream_counts():
    for mcs, bw, nss, _ in ALL:
        assert is_valid(mcs, bw, nss) == ((bw, mcs, nss) not in UNDEFINED)


def test_reference_rates():
    assert round(data_rate(LCM_DEFAULT)) == 72_222_222
    assert data_rate(HCM_DEFAULT) == pytest.approx(650e6, rel=1e-12)
    assert data_rate(PhyConfig(0, 20, 1, "long")) == pytest.approx(6.5e6, rel=1e-12)


def test_hcm_to_lcm_ratio_is_nine():
    assert HCM_DEFAULT.bits_per_symbol / LCM_DEFAULT.bits_per_symbol == 9


@pytest.mark.parametrize("kwargs", [dict(mcs_index=10, bandwidth=20), dict(mcs_index=7, bandwidth=30),
                                    dict(mcs_index=7, bandwidth=20, nss=0), dict(mcs_index=9, bandwidth=20),
                                    dict(mcs_index=7, bandwidth=20, guard_interval="medium")])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(InvalidPhyConfig):
        PhyConfig(**kwargs)


def test_rate_increases_with_streams_and_bandwidth():
    for mcs in range(9):
        rates = [data_rate(PhyConfig(mcs, bw, 1)) for bw in (20, 40, 80, 160)]
        assert rates == sorted(rates) and len(set(rates)) == 4
        by_nss = [data_rate(PhyConfig(mcs, 40, n)) for n in range(1, 9)]
        assert all(a < b for a, b in zip(by_nss, by_nss[1:]))


def test_airtime_empty_payload_is_preamble_plus_overhead():
    ov = MacOverheadParams(mac_header_bytes=0, fcs_bytes=0)
    # only service and tail bits remain: one symbol
    assert frame_airtime(0, LCM_DEFAULT, ov) == pytest.approx(40 + 3.6)
    assert frame_airtime(0, LCM_DEFAULT) > 0


def test_airtime_1500_bytes_symbol_count():
    bits = 16 + 6 + 8 * (1500 + 36 + 4)
    assert frame_airtime(1500, LCM_DEFAULT) == pytest.approx(40 + math.ceil(bits / 260) * 3.6)
    assert n_symbols(1500, LCM_DEFAULT) == 48


@given(st.integers(0, 12_000), st.sampled_from([LCM_DEFAULT, HCM_DEFAULT, PhyConfig(0, 20, 1, "long")]))
def test_airtime_properties(n, cfg):
    t = frame_airtime(n, cfg)
    assert frame_airtime(n + 1, cfg) >= t
    assert t * 1e-6 * data_rate(cfg) >= 8 * n
    assert frame_airtime(2 * n, cfg) <= 2 * t


def test_legacy_control_frames():
    assert legacy_airtime(14) == 44
    assert legacy_airtime(18) == 48


def test_mode_pair_check():
    check_mode_pair(CapabilityMode("LCM", LCM_DEFAULT), CapabilityMode("HCM", HCM_DEFAULT))
    with pytest.raises(ValueError):
        check_mode_pair(CapabilityMode("LCM", HCM_DEFAULT), CapabilityMode("HCM", LCM_DEFAULT))
