"""Carry-chain delay line model and edge propagation with sampler mismatch.

The line is a chain of buffer elements grouped sixteen to a logic block.
An edge launched at the start of a measurement half-period travels down
the chain; each element's output is captured by its own sampler. Element
delays and sampler skews vary from element to element, which is exactly
the non-ideality this toolkit characterizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .timebase import ClockConfig

TAPS_PER_CLB = 16


class LineTooShortError(ValueError):
    """Cumulative line delay does not span the measurement half period."""


@dataclass(frozen=True)
class DelayElement:
    """One buffer stage: its propagation delay and its sampler's skew, in fs."""

    tap_delay: int
    sampler_skew: int

    def __post_init__(self) -> None:
        if self.tap_delay < 0:
            raise ValueError(f"negative tap delay: {self.tap_delay}")


@dataclass(frozen=True)
class RawState:
    """Captured sampler pattern after edge-polarity correction.

    ``bits`` holds sampler outputs with tap 0 at bit 0; ``polarity`` flags
    arrivals in the second half of the measurement period, where the line
    sees the opposite edge. Two arrivals half a period apart produce the
    same corrected bits but must stay distinguishable, so the flag is part
    of the state identity.
    """

    bits: int
    n_taps: int
    polarity: int = 0

    def __post_init__(self) -> None:
        if self.n_taps <= 0:
            raise ValueError("state needs a positive tap count")
        if not 0 <= self.bits < (1 << self.n_taps):
            raise ValueError("bit pattern wider than the tap count")
        if self.polarity not in (0, 1):
            raise ValueError("polarity flag must be 0 or 1")

    @property
    def key(self) -> int:
        """Single-integer identity: tap bits with the polarity flag on top."""
        return self.bits | (self.polarity << self.n_taps)

    @property
    def key_hex(self) -> str:
        digits = (self.n_taps + 1 + 3) // 4
        return f"{self.key:0{digits}x}"

    @classmethod
    def from_key(cls, key: int, n_taps: int) -> "RawState":
        return cls(
            bits=key & ((1 << n_taps) - 1), n_taps=n_taps, polarity=key >> n_taps
        )

    def popcount(self) -> int:
        return self.bits.bit_count()

    def is_gap_free(self) -> bool:
        """True when the set taps form a solid run from tap 0 (no bubbles)."""
        d = self.popcount()
        return self.bits == (1 << d) - 1


@dataclass(frozen=True)
class DelayLineModel:
    """A fixed set of delay elements plus the clocks that drive them.

    Immutable once built. Derived arrays used by the propagation kernels
    are precomputed: ``thresholds[i]`` is the folded arrival phase at and
    above which sampler ``i`` captures 1, i.e. the element's cumulative
    position along the line minus its own sampler skew.
    """

    elements: tuple[DelayElement, ...]
    n_clb: int
    rng_seed: int | None = None
    clock: ClockConfig = field(default_factory=ClockConfig)
    _thresholds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_clb <= 0:
            raise ValueError("need at least one logic block")
        if len(self.elements) != TAPS_PER_CLB * self.n_clb:
            raise ValueError(
                f"{self.n_clb} blocks require {TAPS_PER_CLB * self.n_clb} "
                f"elements, got {len(self.elements)}"
            )
        delays = np.array([e.tap_delay for e in self.elements], dtype=np.int64)
        skews = np.array([e.sampler_skew for e in self.elements], dtype=np.int64)
        total = int(delays.sum())
        if total < self.clock.half_period:
            raise LineTooShortError(
                f"delay line spans {total} fs but must cover the half "
                f"period of {self.clock.half_period} fs "
                f"(short by {self.clock.half_period - total} fs)"
            )
        # Element i sits after elements 0..i-1; the edge reaches it once the
        # folded phase passes that cumulative position.
        positions = np.concatenate(([0], np.cumsum(delays)[:-1]))
        object.__setattr__(self, "_thresholds", positions - skews)

    @property
    def n_taps(self) -> int:
        return len(self.elements)

    @property
    def total_delay(self) -> int:
        return sum(e.tap_delay for e in self.elements)

    @property
    def thresholds(self) -> np.ndarray:
        return self._thresholds

    @property
    def n_word_columns(self) -> int:
        return _kernels.n_words(self.n_taps)


def build_model(
    n_clb: int,
    nominal_tap_delay: int,
    mismatch_sigma: int,
    skew_sigma: int,
    seed: int | None = None,
    clock: ClockConfig | None = None,
) -> DelayLineModel:
    """Draw a randomized delay line around the nominal element delay.

    Element delays are Gaussian around the nominal value, clamped at zero;
    sampler skews are zero-mean Gaussian. The same seed always yields the
    same model. Raises ``LineTooShortError`` if the drawn line cannot cover
    the half period.
    """
    if clock is None:
        clock = ClockConfig()
    if nominal_tap_delay <= 0:
        raise ValueError("nominal tap delay must be positive")
    if mismatch_sigma < 0 or skew_sigma < 0:
        raise ValueError("spread parameters must be non-negative")
    n_taps = TAPS_PER_CLB * n_clb
    rng = np.random.default_rng(seed)
    delays = np.rint(rng.normal(nominal_tap_delay, mismatch_sigma, n_taps))
    delays = np.maximum(delays, 0).astype(np.int64)
    skews = np.rint(rng.normal(0.0, skew_sigma, n_taps)).astype(np.int64)
    elements = tuple(
        DelayElement(int(d), int(s)) for d, s in zip(delays, skews)
    )
    return DelayLineModel(elements=elements, n_clb=n_clb, rng_seed=seed, clock=clock)


def propagate(model: DelayLineModel, arrival_phase: int) -> RawState:
    """Sample the line for one arrival phase within the measurement period."""
    period = model.clock.start_period
    if not 0 <= arrival_phase < period:
        raise ValueError(
            f"arrival phase {arrival_phase} outside [0, {period}) fs"
        )
    polarity = int(arrival_phase >= model.clock.half_period)
    folded = arrival_phase - polarity * model.clock.half_period
    mask = model.thresholds <= folded
    bits = int.from_bytes(
        np.packbits(mask, bitorder="little").tobytes(), "little"
    )
    return RawState(bits=bits, n_taps=model.n_taps, polarity=polarity)


def propagate_batch(model: DelayLineModel, phases: np.ndarray) -> np.ndarray:
    """Vectorized :func:`propagate`: one packed uint64 row per phase."""
    phases = np.asarray(phases, dtype=np.int64)
    if phases.size and (
        phases.min() < 0 or phases.max() >= model.clock.start_period
    ):
        raise ValueError("arrival phases outside the measurement period")
    return _kernels.pack_states(
        model.thresholds, phases, model.clock.half_period, model.n_taps
    )


def words_to_state(row: np.ndarray, n_taps: int) -> RawState:
    """Unpack one uint64 word row back into a :class:`RawState`."""
    key = 0
    for k, word in enumerate(row):
        key |= int(word) << (64 * k)
    return RawState.from_key(key, n_taps)


def state_to_words(state: RawState, width: int | None = None) -> np.ndarray:
    if width is None:
        width = _kernels.n_words(state.n_taps)
    key = state.key
    mask = (1 << 64) - 1
    return np.array(
        [(key >> (64 * k)) & mask for k in range(width)], dtype=np.uint64
    )


def state_intervals(model: DelayLineModel) -> list[tuple[RawState, int]]:
    """Every state the model can emit with its exact phase-interval width.

    Derived directly from the sampler thresholds, not from sampling, so
    the widths are ground truth. Ordered by arrival phase; widths sum to
    the full measurement period.
    """
    half = model.clock.half_period
    cuts = sorted({int(t) for t in model.thresholds if 0 < t < half})
    edges = [0, *cuts, half]
    out: list[tuple[RawState, int]] = []
    for polarity in (0, 1):
        for lo, hi in zip(edges, edges[1:]):
            mask = model.thresholds <= lo
            bits = int.from_bytes(
                np.packbits(mask, bitorder="little").tobytes(), "little"
            )
            out.append((RawState(bits, model.n_taps, polarity), hi - lo))
    return out


_MODEL_MAGIC = "# tdl delay-line model v1"


def save_model(model: DelayLineModel, path: str | Path) -> None:
    """Write the model as readable text: one element per row."""
    lines = [
        _MODEL_MAGIC,
        f"# n_clb: {model.n_clb}",
        f"# rng_seed: {'none' if model.rng_seed is None else model.rng_seed}",
        f"# start_period_fs: {model.clock.start_period}",
        f"# stop_period_fs: {model.clock.stop_period}",
        f"# ifps_step_fs: {model.clock.ifps_step}",
        "# columns: index tap_delay_fs sampler_skew_fs",
    ]
    for i, e in enumerate(model.elements):
        lines.append(f"{i} {e.tap_delay} {e.sampler_skew}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> DelayLineModel:
    """Read a model written by :func:`save_model`."""
    text = Path(path).read_text(encoding="utf-8")
    header: dict[str, str] = {}
    rows: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if ":" in body:
                key, _, value = body.partition(":")
                header[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
    if not rows:
        raise ValueError(f"{path}: no delay elements found")
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: element indices must be 0..n-1 without gaps")
    try:
        n_clb = int(header["n_clb"])
    except KeyError:
        n_clb, rem = divmod(len(rows), TAPS_PER_CLB)
        if rem:
            raise ValueError(
                f"{path}: {len(rows)} elements is not a whole number of "
                f"{TAPS_PER_CLB}-element blocks"
            ) from None
    seed_text = header.get("rng_seed", "none")
    seed = None if seed_text == "none" else int(seed_text)
    clock = ClockConfig(
        start_period=int(header.get("start_period_fs", ClockConfig().start_period)),
        half_period=int(header.get("start_period_fs", ClockConfig().start_period))
        // 2,
        stop_period=int(header.get("stop_period_fs", ClockConfig().stop_period)),
        ifps_step=int(header.get("ifps_step_fs", ClockConfig().ifps_step)),
    )
    elements = tuple(DelayElement(d, s) for _, d, s in rows)
    return DelayLineModel(elements=elements, n_clb=n_clb, rng_seed=seed, clock=clock)
