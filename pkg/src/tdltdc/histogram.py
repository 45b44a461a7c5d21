"""Windowed histogram accumulation with two interleaved buffers.

One buffer accumulates the open integration window while the other is
read out and cleared, so acquisition never pauses. Counters are 16 bit
and saturate rather than wrap; every increment that could not be stored
is tallied, which keeps event conservation checkable to the last count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

MAX_BINS = 1200
COUNTER_MAX = 65535


@dataclass(frozen=True)
class FullTimestamp:
    """Coarse cycle count plus fine bin index within the cycle."""

    coarse: int
    fine: int


def coarse_registers(coarse: int, fine: int, n_fine: int) -> tuple[int, int]:
    """The two coarse-counter captures available to the combiner.

    The nominal register transfers the count at the cycle boundary; a
    second register runs a quarter cycle early, so for events in the last
    quarter of the cycle it has already stepped to the next count. Each
    register is unreliable near its own transition; together they cover
    the full cycle.
    """
    early = coarse + 1 if fine * 4 >= 3 * n_fine else coarse
    nominal = coarse
    return early, nominal


def select_coarse(coarse: int, fine: int, n_fine: int) -> int:
    """Pick the register that is stable for this fine code.

    Events in the first half of the cycle sit close to the nominal
    transfer edge, so they read the early register; events in the second
    half sit close to the early register's transition and read the
    nominal one. Either way the selected value is the true cycle count.
    """
    early, nominal = coarse_registers(coarse, fine, n_fine)
    return early if fine * 2 < n_fine else nominal


def combine_timestamp(ts: FullTimestamp, n_fine: int) -> int:
    """Full bin index of a timestamp: selected coarse count times the
    fine range, plus the fine code."""
    if not 0 <= ts.fine < n_fine:
        raise ValueError(f"fine code {ts.fine} outside [0, {n_fine})")
    return select_coarse(ts.coarse, ts.fine, n_fine) * n_fine + ts.fine


def combine_batch(
    coarse: np.ndarray, fine: np.ndarray, n_fine: int
) -> np.ndarray:
    """Vectorized :func:`combine_timestamp` over parallel arrays."""
    coarse = np.asarray(coarse, dtype=np.int64)
    fine = np.asarray(fine, dtype=np.int64)
    if fine.size and (fine.min() < 0 or fine.max() >= n_fine):
        raise ValueError(f"fine code outside [0, {n_fine})")
    early = coarse + (fine * 4 >= 3 * n_fine)
    selected = np.where(fine * 2 < n_fine, early, coarse)
    return selected * n_fine + fine


def timestamp_to_fs(
    ts: FullTimestamp, start_period: int, covered_range: int, n_fine: int
) -> float:
    """Nominal event time: cycle count plus the fine bin's center."""
    coarse = select_coarse(ts.coarse, ts.fine, n_fine)
    return coarse * start_period + (ts.fine + 0.5) * covered_range / n_fine


@dataclass(frozen=True)
class HistogramSnapshot:
    """Read-out of one finished integration window."""

    window_id: int
    window_start: int
    integration_time: int
    lsb_fs: float
    counts: np.ndarray

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class HistogramPair:
    """Two interleaved histograms behind one recording interface.

    Time is divided into back-to-back windows of fixed integration time.
    Events land in the buffer backing the open window; ``swap_and_read``
    closes the window exactly at its boundary, returns its counts, and
    opens the next window on the other buffer. An event stamped exactly
    on a boundary belongs to the next window, so the caller must swap
    before recording it.
    """

    def __init__(
        self,
        n_bins: int,
        n_fine: int,
        integration_time: int,
        lsb_fs: float,
        start_time: int = 0,
    ) -> None:
        if n_bins <= 0 or n_fine <= 0:
            raise ValueError("need at least one bin and one fine group")
        if n_bins > MAX_BINS:
            raise ValueError(
                f"{n_bins} bins requested but the interleaving budget "
                f"is {MAX_BINS}"
            )
        if n_bins % n_fine:
            raise ValueError(
                "bin count must be a whole number of fine ranges"
            )
        if integration_time <= 0:
            raise ValueError("integration time must be positive")
        self.n_bins = n_bins
        self.n_fine = n_fine
        self.integration_time = integration_time
        self.lsb_fs = lsb_fs
        self._buffers = np.zeros((2, n_bins), dtype=np.uint16)
        self._active = 0
        self.window_id = 0
        self.window_start = start_time
        self.accepted = 0
        self.rejected = 0
        self.saturated_lost = 0

    @property
    def window_end(self) -> int:
        return self.window_start + self.integration_time

    def active_counts(self) -> np.ndarray:
        return self._buffers[self._active].astype(np.int64)

    def record(self, ts: FullTimestamp, sim_time: int) -> bool:
        """Count one timestamp; returns whether it was stored.

        The coarse count is taken through the dual-register selection, so
        a counter transition racing the fine capture cannot corrupt the
        combined bin. Timestamps beyond the measurement range are
        rejected and tallied, never truncated into a wrong bin.
        """
        return self._store(combine_timestamp(ts, self.n_fine), sim_time)

    def _store(self, bin_index: int, sim_time: int) -> bool:
        if sim_time < self.window_start:
            raise ValueError("event time precedes the open window")
        if sim_time >= self.window_end:
            raise ValueError(
                "event beyond the open window; close the window first"
            )
        if not 0 <= bin_index < self.n_bins:
            self.rejected += 1
            return False
        buf = self._buffers[self._active]
        if buf[bin_index] == COUNTER_MAX:
            self.saturated_lost += 1
            return False
        buf[bin_index] += 1
        self.accepted += 1
        return True

    def swap_and_read(self, now: int) -> HistogramSnapshot:
        """Close the open window at its boundary and return its counts."""
        if now != self.window_end:
            raise ValueError(
                f"window closes at {self.window_end} fs, not {now} fs"
            )
        finished = self._buffers[self._active]
        snapshot = HistogramSnapshot(
            window_id=self.window_id,
            window_start=self.window_start,
            integration_time=self.integration_time,
            lsb_fs=self.lsb_fs,
            counts=finished.astype(np.int64),
        )
        finished[:] = 0
        self._active ^= 1
        self.window_id += 1
        self.window_start = now
        return snapshot

    def accumulate(
        self, bin_indices: np.ndarray, times: np.ndarray
    ) -> list[HistogramSnapshot]:
        """Record a time-sorted batch of combined bins, swapping windows
        along the way.

        Takes bin indices as produced by :func:`combine_batch` and behaves
        exactly like per-event ``record``/``swap_and_read`` calls,
        including for events stamped on window boundaries. Windows the
        batch skips over entirely are still emitted as all-zero snapshots.
        """
        bin_indices = np.asarray(bin_indices)
        times = np.asarray(times, dtype=np.int64)
        if bin_indices.shape != times.shape:
            raise ValueError("one time per bin index required")
        if times.size == 0:
            return []
        if np.any(np.diff(times) < 0):
            raise ValueError("batch times must be sorted")
        if times[0] < self.window_start:
            raise ValueError("event time precedes the open window")
        snapshots: list[HistogramSnapshot] = []
        pos = 0
        n = times.shape[0]
        while pos < n:
            if times[pos] >= self.window_end:
                snapshots.append(self.swap_and_read(self.window_end))
                continue
            stop = int(np.searchsorted(times, self.window_end, side="left"))
            segment = bin_indices[pos:stop]
            in_range = (segment >= 0) & (segment < self.n_bins)
            bad = int(segment.shape[0] - in_range.sum())
            self.rejected += bad
            stored = segment[in_range].astype(np.int64)
            lost = _kernels.fill_bins(self._buffers[self._active], stored)
            self.saturated_lost += lost
            self.accepted += int(stored.shape[0]) - lost
            pos = stop
        return snapshots

    def drain_until(self, t: int) -> list[HistogramSnapshot]:
        """Close every window whose boundary is at or before ``t``."""
        snapshots = []
        while self.window_end <= t:
            snapshots.append(self.swap_and_read(self.window_end))
        return snapshots


def save_snapshot(
    snapshot: HistogramSnapshot,
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    """CSV export: window metadata line, then bin_index,count rows."""
    lines = ["window_id,integration_time_fs,lsb_fs,n_bins"]
    lines.append(
        f"{snapshot.window_id},{snapshot.integration_time},"
        f"{snapshot.lsb_fs!r},{snapshot.n_bins}"
    )
    for key, value in (extra_header or {}).items():
        lines.insert(0, f"# {key}: {value}")
    lines.append("bin_index,count")
    for i, c in enumerate(snapshot.counts):
        lines.append(f"{i},{int(c)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_snapshot(path: str | Path) -> HistogramSnapshot:
    rows: list[list[str]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append(line.split(","))
    if len(rows) < 3 or rows[0] != [
        "window_id",
        "integration_time_fs",
        "lsb_fs",
        "n_bins",
    ]:
        raise ValueError(f"{path}: not a histogram snapshot file")
    window_id, integration, lsb, n_bins = rows[1]
    counts = np.zeros(int(n_bins), dtype=np.int64)
    for bin_text, count_text in rows[3:]:
        counts[int(bin_text)] = int(count_text)
    return HistogramSnapshot(
        window_id=int(window_id),
        window_start=0,
        integration_time=int(integration),
        lsb_fs=float(lsb),
        counts=counts,
    )
