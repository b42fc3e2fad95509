"""Byte-level helpers shared by the frame and element codecs."""

from __future__ import annotations

import struct
import zlib
from typing import Optional

BW_CODES = {20: 0, 40: 1, 80: 2, 160: 3}
BW_FROM_CODE = {v: k for k, v in BW_CODES.items()}

_FCS = struct.Struct("<I")


class CorruptFrameError(ValueError):
    """Checksum mismatch or malformed bytes."""


def fcs(data: bytes) -> bytes:
    """CRC-32 (IEEE 802.3 polynomial, reflected) as 4 little-endian bytes."""
    return _FCS.pack(zlib.crc32(data) & 0xFFFFFFFF)


def check_fcs(data: bytes, checksum: bytes) -> bool:
    return fcs(data) == bytes(checksum)


def pack_caps(bandwidth: int, nss: int, mcs: Optional[int] = None) -> int:
    """Capability word: bandwidth code in bits 0-3, nss in 4-7, mcs in 8-11."""
    if bandwidth not in BW_CODES:
        raise ValueError(f"unsupported bandwidth {bandwidth}")
    if not 1 <= nss <= 15:
        raise ValueError(f"nss {nss} does not fit in four bits")
    word = BW_CODES[bandwidth] | (nss << 4)
    if mcs is not None:
        if not 0 <= mcs <= 15:
            raise ValueError(f"mcs {mcs} does not fit in four bits")
        word |= mcs << 8
    return word


def unpack_caps(word: int, with_mcs: bool = False):
    code = word & 0xF
    if code not in BW_FROM_CODE:
        raise CorruptFrameError(f"unknown bandwidth code {code}")
    bw, nss = BW_FROM_CODE[code], (word >> 4) & 0xF
    if with_mcs:
        return bw, nss, (word >> 8) & 0xF
    return bw, nss
