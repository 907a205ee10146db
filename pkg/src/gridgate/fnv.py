"""64-bit FNV-1a, used for payload checksums and event binning."""

from __future__ import annotations

_OFFSET = 0xCBF29CE484222325
_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _OFFSET
    for byte in data:
        h = ((h ^ byte) * _PRIME) & _MASK
    return h


def fnv1a_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"
