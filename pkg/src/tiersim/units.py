"""Parsing helpers for byte sizes, durations and latencies in scenario files."""

from __future__ import annotations

import re

KIB = 1024
MIB = 1024 * KIB
GIB = 1024 * MIB
TIB = 1024 * GIB

_BYTE_SUFFIXES = {
    "": 1,
    "b": 1,
    "kib": KIB,
    "mib": MIB,
    "gib": GIB,
    "tib": TIB,
}

_TIME_SUFFIXES = {
    "ns": 1e-9,
    "us": 1e-6,
    "ms": 1e-3,
    "s": 1.0,
    "": 1.0,  # bare numbers are seconds
}

_NUM_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([a-zA-Z/]*)\s*$")


class UnitError(ValueError):
    """Raised when a size or duration string cannot be parsed."""


def parse_bytes(value: int | str) -> int:
    """Parse a byte count such as 42, "512KiB", "16MiB" or "1GiB"."""
    if isinstance(value, int):
        if value < 0:
            raise UnitError(f"byte count must be >= 0, got {value}")
        return value
    m = _NUM_RE.match(value)
    if not m:
        raise UnitError(f"cannot parse byte size {value!r}")
    num, suffix = m.groups()
    factor = _BYTE_SUFFIXES.get(suffix.lower())
    if factor is None:
        raise UnitError(f"unknown byte suffix {suffix!r} in {value!r}")
    return int(float(num) * factor)


def parse_rate(value: int | str, epoch_duration: float) -> int:
    """Parse a migration budget: plain sizes are per epoch, "/s" sizes per second.

    Per-second rates are converted to a per-epoch byte budget using the
    epoch duration, so "1GiB/s" with a 0.5 s epoch yields 512 MiB per epoch.
    """
    if isinstance(value, str) and value.rstrip().lower().endswith("/s"):
        per_second = parse_bytes(value.rstrip()[:-2])
        return int(per_second * epoch_duration)
    return parse_bytes(value)


def parse_seconds(value: float | int | str) -> float:
    """Parse a duration such as 0.5, "100ms", "20us" or "1s" into seconds."""
    if isinstance(value, (int, float)):
        result = float(value)
    else:
        m = _NUM_RE.match(value)
        if not m:
            raise UnitError(f"cannot parse duration {value!r}")
        num, suffix = m.groups()
        factor = _TIME_SUFFIXES.get(suffix.lower())
        if factor is None:
            raise UnitError(f"unknown time suffix {suffix!r} in {value!r}")
        result = float(num) * factor
    if result <= 0:
        raise UnitError(f"duration must be positive, got {value!r}")
    return result


def format_bytes(n: int) -> str:
    for unit, factor in (("GiB", GIB), ("MiB", MIB), ("KiB", KIB)):
        if n >= factor and n % factor == 0:
            return f"{n // factor}{unit}"
    return f"{n}B"
