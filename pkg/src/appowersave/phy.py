"""VHT (802.11ac) rate and airtime arithmetic.

Only single-user VHT PPDUs are modelled. Rates follow the usual
``N_SD * N_BPSCS * R * N_SS / T_SYM`` rule; airtimes count whole OFDM
symbols after a fixed preamble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

BANDWIDTHS = (20, 40, 80, 160)

# data subcarriers per bandwidth (MHz)
DATA_SUBCARRIERS = {20: 52, 40: 108, 80: 234, 160: 468}

# mcs -> (coded bits per subcarrier per stream, code rate)
MCS_TABLE = {
    0: (1, Fraction(1, 2)),
    1: (2, Fraction(1, 2)),
    2: (2, Fraction(3, 4)),
    3: (4, Fraction(1, 2)),
    4: (4, Fraction(3, 4)),
    5: (6, Fraction(2, 3)),
    6: (6, Fraction(3, 4)),
    7: (6, Fraction(5, 6)),
    8: (8, Fraction(3, 4)),
    9: (8, Fraction(5, 6)),
}

# (bandwidth, mcs) -> spatial-stream counts for which the combination is not defined
_EXCLUDED = {
    (20, 9): {1, 2, 4, 5, 7, 8},
    (80, 6): {3, 7},
    (80, 9): {6},
    (160, 9): {3},
}

MAX_NSS = 8
SYMBOL_US = 3.2
SERVICE_BITS = 16
TAIL_BITS = 6

GuardInterval = Literal["short", "long"]
GI_US = {"short": 0.4, "long": 0.8}


class InvalidPhyConfig(ValueError):
    """Raised for a (mcs, bandwidth, nss, gi) tuple that VHT does not define."""


@dataclass(frozen=True)
class PhyConfig:
    mcs_index: int
    bandwidth: int
    nss: int = 1
    guard_interval: GuardInterval = "short"
    tx_power_dbm: float = 16.0

    def __post_init__(self):
        check_config(self)

    @property
    def symbol_us(self) -> float:
        return SYMBOL_US + GI_US[self.guard_interval]

    @property
    def bits_per_symbol(self) -> int:
        """Data bits carried by one OFDM symbol (N_DBPS)."""
        bpscs, rate = MCS_TABLE[self.mcs_index]
        n_dbps = DATA_SUBCARRIERS[self.bandwidth] * bpscs * rate * self.nss
        # every defined VHT combination yields an integral N_DBPS
        return int(n_dbps)

    def with_(self, **changes) -> "PhyConfig":
        fields = dict(
            mcs_index=self.mcs_index,
            bandwidth=self.bandwidth,
            nss=self.nss,
            guard_interval=self.guard_interval,
            tx_power_dbm=self.tx_power_dbm,
        )
        fields.update(changes)
        return PhyConfig(**fields)


def is_valid(mcs_index: int, bandwidth: int, nss: int) -> bool:
    if mcs_index not in MCS_TABLE or bandwidth not in BANDWIDTHS:
        return False
    if not 1 <= nss <= MAX_NSS:
        return False
    return nss not in _EXCLUDED.get((bandwidth, mcs_index), ())


def check_config(cfg: PhyConfig) -> None:
    if cfg.guard_interval not in GI_US:
        raise InvalidPhyConfig(f"unknown guard interval {cfg.guard_interval!r}")
    if not is_valid(cfg.mcs_index, cfg.bandwidth, cfg.nss):
        raise InvalidPhyConfig(
            f"VHT does not define MCS {cfg.mcs_index} at {cfg.bandwidth} MHz "
            f"with {cfg.nss} spatial stream(s)"
        )


@dataclass(frozen=True)
class CapabilityMode:
    label: Literal["LCM", "HCM"]
    phy: PhyConfig


def check_mode_pair(lcm: CapabilityMode, hcm: CapabilityMode) -> None:
    if lcm.label != "LCM" or hcm.label != "HCM":
        raise ValueError("expected an (LCM, HCM) pair")
    if hcm.phy.bandwidth * hcm.phy.nss <= lcm.phy.bandwidth * lcm.phy.nss:
        raise ValueError("HCM must offer more bandwidth x spatial streams than LCM")


# Reference modes of the capability study: MCS 7, short GI, 16 dBm.
LCM_DEFAULT = PhyConfig(mcs_index=7, bandwidth=20, nss=1)
HCM_DEFAULT = PhyConfig(mcs_index=7, bandwidth=80, nss=2)


def data_rate(cfg: PhyConfig) -> float:
    """PHY data rate in bit/s."""
    return cfg.bits_per_symbol / (cfg.symbol_us * 1e-6)


@dataclass(frozen=True)
class MacOverheadParams:
    mac_header_bytes: int = 36
    fcs_bytes: int = 4
    preamble_us: float = 40.0


DEFAULT_OVERHEAD = MacOverheadParams()


def n_symbols(payload_bytes: int, cfg: PhyConfig, overhead: MacOverheadParams = DEFAULT_OVERHEAD) -> int:
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    bits = SERVICE_BITS + TAIL_BITS + 8 * (payload_bytes + overhead.mac_header_bytes + overhead.fcs_bytes)
    return math.ceil(bits / cfg.bits_per_symbol)


def frame_airtime(
    payload_bytes: int, cfg: PhyConfig, overhead: MacOverheadParams = DEFAULT_OVERHEAD
) -> float:
    """Airtime of one MPDU carrying ``payload_bytes`` in microseconds."""
    return overhead.preamble_us + n_symbols(payload_bytes, cfg, overhead) * cfg.symbol_us


def legacy_airtime(frame_bytes: int, rate_mbps: int = 6) -> float:
    """Non-HT OFDM airtime (us) of a whole frame, used for control and Beacon frames."""
    bits_per_symbol = 4 * rate_mbps
    symbols = math.ceil((SERVICE_BITS + 8 * frame_bytes + TAIL_BITS) / bits_per_symbol)
    return 20.0 + 4.0 * symbols


ACK_BYTES = 14
ACK_AIRTIME_US = legacy_airtime(ACK_BYTES)
