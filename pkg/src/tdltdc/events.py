"""Event sources that drive the simulated converter.

A source yields absolute event times plus the arrival phase of each event
within the measurement period. Sampling is stateless: the same source and
count always reproduce the same events.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delayline import DelayLineModel, RawState, propagate_batch, words_to_state
from .timebase import ClockConfig

KINDS = ("uniform-phase", "exponential-arrivals", "fixed-phase-sweep")


@dataclass(frozen=True)
class EventSource:
    """Recipe for a stream of event times.

    ``uniform-phase`` places events on the event-clock grid with phases
    drawn uniformly over the measurement period. ``exponential-arrivals``
    spaces events by exponential interarrival times with the given mean,
    the natural model for uncorrelated pulses. ``fixed-phase-sweep`` steps
    the phase deterministically by ``step_fs`` per event.
    """

    kind: str
    seed: int = 0
    mean_interval_fs: int = 10_000_000
    step_fs: int = 14_800

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown event source kind: {self.kind!r}")
        if self.kind == "exponential-arrivals" and self.mean_interval_fs <= 0:
            raise ValueError("mean interarrival time must be positive")
        if self.kind == "fixed-phase-sweep" and self.step_fs <= 0:
            raise ValueError("sweep step must be positive")


def sample_times_and_phases(
    source: EventSource, count: int, clock: ClockConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Generate ``count`` events: absolute times and measurement phases, fs."""
    if count < 0:
        raise ValueError("event count must be non-negative")
    period = clock.start_period
    if source.kind == "uniform-phase":
        rng = np.random.default_rng(source.seed)
        times = (np.arange(1, count + 1, dtype=np.int64)) * clock.stop_period
        phases = rng.integers(0, period, size=count, dtype=np.int64)
        return times, phases
    if source.kind == "exponential-arrivals":
        rng = np.random.default_rng(source.seed)
        gaps = np.rint(
            rng.exponential(float(source.mean_interval_fs), size=count)
        ).astype(np.int64)
        np.maximum(gaps, 1, out=gaps)
        times = np.cumsum(gaps)
        return times, times % period
    # fixed-phase-sweep
    index = np.arange(count, dtype=np.int64)
    times = (index + 1) * clock.stop_period
    phases = (index * source.step_fs) % period
    return times, phases


def sample_events(
    model: DelayLineModel, source: EventSource, count: int
) -> list[tuple[int, RawState]]:
    """Convenience pairing of each sampled phase with its captured state."""
    _, phases = sample_times_and_phases(source, count, model.clock)
    words = propagate_batch(model, phases)
    return [
        (int(p), words_to_state(row, model.n_taps))
        for p, row in zip(phases, words)
    ]
