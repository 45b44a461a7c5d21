"""Integer femtosecond time arithmetic and system clock parameters.

All internal time quantities are integers in femtoseconds (``int``), so
arithmetic on phases, delays, and widths is exact. Floats appear only in
derived statistics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

FS_PER_PS = 1000

# Clocking scheme defaults: 600 MHz measurement clock driving the delay
# line, 100 MHz event clock, and the smallest programmable step of the
# phase-shift generator used for interval sweeps.
DEFAULT_START_PERIOD_FS = 1_667_000
DEFAULT_HALF_PERIOD_FS = 833_500
DEFAULT_STOP_PERIOD_FS = 10_000_000
DEFAULT_IFPS_STEP_FS = 14_800

_PS_PATTERN = re.compile(r"^([+-]?)(\d+)(?:\.(\d+))?$")


def ps_to_fs(text: str) -> int:
    """Parse a decimal picosecond string into integer femtoseconds.

    At most three fractional digits are accepted; anything finer has no
    exact femtosecond representation and is rejected rather than rounded.
    """
    m = _PS_PATTERN.match(text.strip())
    if m is None:
        raise ValueError(f"not a decimal picosecond value: {text!r}")
    sign, whole, frac = m.group(1), m.group(2), m.group(3) or ""
    if len(frac) > 3:
        raise ValueError(
            f"{text!r} has {len(frac)} fractional digits; "
            "femtosecond resolution allows at most 3"
        )
    value = int(whole) * FS_PER_PS + int(frac.ljust(3, "0"))
    return -value if sign == "-" else value


def fs_to_ps(value: int) -> str:
    """Format integer femtoseconds as an exact picosecond decimal string."""
    sign = "-" if value < 0 else ""
    whole, frac = divmod(abs(value), FS_PER_PS)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:03d}".rstrip("0")


def round_fs_to_ps(value: int) -> int:
    """Convert femtoseconds to whole picoseconds with half-to-even rounding."""
    q, r = divmod(value, FS_PER_PS)
    double = 2 * r
    if double > FS_PER_PS or (double == FS_PER_PS and q % 2 != 0):
        q += 1
    return q


@dataclass(frozen=True)
class ClockConfig:
    """Periods of the measurement and event clocks, in femtoseconds.

    The measurement clock defines the fine range: one propagation pass per
    half period, with opposite edge polarity on alternating halves.
    """

    start_period: int = DEFAULT_START_PERIOD_FS
    half_period: int = DEFAULT_HALF_PERIOD_FS
    stop_period: int = DEFAULT_STOP_PERIOD_FS
    ifps_step: int = DEFAULT_IFPS_STEP_FS

    def __post_init__(self) -> None:
        if self.start_period <= 0 or self.stop_period <= 0:
            raise ValueError("clock periods must be positive")
        if self.half_period * 2 != self.start_period:
            raise ValueError(
                f"half period {self.half_period} fs is not half of the "
                f"measurement period {self.start_period} fs"
            )
        if self.ifps_step <= 0:
            raise ValueError("phase-shift step must be positive")
