"""State collection and ordering, plus occupancy-based width estimation.

Real delay lines emit far fewer distinct sampler patterns than the
theoretical code space, and the patterns that do occur (bubbles included)
are stable. The catalog enumerates what was actually seen, orders it by a
rank that tracks arrival phase, and estimates each state's phase width
from how often it occurred under uniform illumination.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .delayline import RawState, state_to_words, words_to_state


def seq_value(state: RawState) -> int:
    """Phase-tracking rank of a state.

    Within one half period the number of set taps grows with arrival
    phase regardless of bubbles, so the population count orders states
    correctly; opposite-polarity states rank after all first-half states.
    """
    return state.popcount() + state.polarity * state.n_taps


@dataclass(frozen=True)
class StateRecord:
    state: RawState
    seq: int
    count: int
    width: int = 0

    def __post_init__(self) -> None:
        if self.count < 0 or self.width < 0:
            raise ValueError("count and width must be non-negative")


def _record_sort_key(record: StateRecord) -> tuple[int, int, int]:
    # Rank first; equal ranks ordered by the packed pattern, then by the
    # polarity flag. Deterministic and independent of collection order.
    return (record.seq, record.state.bits, record.state.polarity)


@dataclass(frozen=True)
class StateCatalog:
    """Ordered set of observed states for one delay-line model."""

    records: tuple[StateRecord, ...]
    covered_range: int
    n_taps: int
    total_events: int

    def __post_init__(self) -> None:
        if self.covered_range <= 0:
            raise ValueError("covered range must be positive")
        keys = [r.state.key for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValueError("catalog contains duplicate states")
        ordered = sorted(self.records, key=_record_sort_key)
        object.__setattr__(self, "records", tuple(ordered))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[StateRecord]:
        return iter(self.records)

    def widths(self) -> np.ndarray:
        return np.array([r.width for r in self.records], dtype=np.int64)

    def counts(self) -> np.ndarray:
        return np.array([r.count for r in self.records], dtype=np.int64)

    def with_widths(self, widths: Iterable[int]) -> "StateCatalog":
        widths = list(widths)
        if len(widths) != len(self.records):
            raise ValueError("one width per record required")
        records = tuple(
            replace(r, width=int(w)) for r, w in zip(self.records, widths)
        )
        return replace(self, records=records)

    def lookup_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Packed rows plus their catalog positions, sorted for the kernels.

        Row order is the kernels' comparison order (most significant word
        first), which the compiled binary-search lookup requires.
        """
        width = _kernels.n_words(self.n_taps)
        rows = np.vstack(
            [state_to_words(r.state, width) for r in self.records]
        )
        positions = np.arange(len(self.records), dtype=np.int32)
        order = np.lexsort(tuple(rows[:, k] for k in range(width)))
        return np.ascontiguousarray(rows[order]), positions[order]


def build_catalog(
    samples: Iterable[RawState], covered_range: int
) -> StateCatalog:
    """Tally distinct states from individually propagated samples."""
    counts: dict[int, int] = {}
    n_taps = None
    total = 0
    for state in samples:
        if n_taps is None:
            n_taps = state.n_taps
        elif state.n_taps != n_taps:
            raise ValueError("samples mix different line lengths")
        counts[state.key] = counts.get(state.key, 0) + 1
        total += 1
    if n_taps is None:
        raise ValueError("cannot build a catalog from zero samples")
    records = tuple(
        StateRecord(
            state=(s := RawState.from_key(key, n_taps)),
            seq=seq_value(s),
            count=c,
        )
        for key, c in counts.items()
    )
    return StateCatalog(
        records=records,
        covered_range=covered_range,
        n_taps=n_taps,
        total_events=total,
    )


def build_catalog_from_words(
    words: np.ndarray, n_taps: int, covered_range: int
) -> StateCatalog:
    """Tally distinct states from a packed batch (the fast path)."""
    if words.ndim != 2 or words.shape[0] == 0:
        raise ValueError("need a non-empty (events, words) batch")
    dtype = np.dtype([(f"w{k}", "<u8") for k in range(words.shape[1])])
    rows = np.ascontiguousarray(words).view(dtype)[:, 0]
    uniq, counts = np.unique(rows, return_counts=True)
    plain = uniq.view("<u8").reshape(len(uniq), words.shape[1])
    records = []
    for row, c in zip(plain, counts):
        state = words_to_state(row, n_taps)
        records.append(
            StateRecord(state=state, seq=seq_value(state), count=int(c))
        )
    return StateCatalog(
        records=tuple(records),
        covered_range=covered_range,
        n_taps=n_taps,
        total_events=int(words.shape[0]),
    )


def estimate_widths(
    catalog: StateCatalog, counts: Iterable[int] | None = None
) -> StateCatalog:
    """Apportion the covered range across states proportionally to counts.

    Under uniform illumination a state's occurrence probability is its
    phase width over the covered range. ``counts`` defaults to the
    catalog's own collection tallies; an explicit sequence (one entry per
    record) substitutes a separate density run. Integer widths are
    assigned by largest remainder so they sum exactly to the covered
    range; a rarely seen state can legitimately round to width zero.
    """
    if counts is None:
        counts = catalog.counts()
    else:
        counts = np.array([int(c) for c in counts], dtype=np.int64)
        if counts.shape[0] != len(catalog):
            raise ValueError("need exactly one count per catalog record")
        if np.any(counts < 0):
            raise ValueError("negative occurrence count")
    total = int(counts.sum())
    if total <= 0:
        raise ValueError("width estimation needs a non-empty tally")
    scaled = counts * catalog.covered_range
    base = scaled // total
    remainders = scaled - base * total
    deficit = catalog.covered_range - int(base.sum())
    widths = base.copy()
    if deficit > 0:
        order = np.argsort(-remainders, kind="stable")
        widths[order[:deficit]] += 1
    return catalog.with_widths(widths.tolist())


def discovery_curve(
    words: np.ndarray, checkpoint: int = 100_000
) -> list[tuple[int, int]]:
    """Distinct-state count after every ``checkpoint`` events.

    A flattening curve is the practical sign that collection has seen
    everything the line produces.
    """
    if words.ndim != 2 or words.shape[0] == 0:
        raise ValueError("need a non-empty (events, words) batch")
    if checkpoint <= 0:
        raise ValueError("checkpoint spacing must be positive")
    dtype = np.dtype([(f"w{k}", "<u8") for k in range(words.shape[1])])
    rows = np.ascontiguousarray(words).view(dtype)[:, 0]
    _, first_index = np.unique(rows, return_index=True)
    first_index.sort()
    n = words.shape[0]
    marks = list(range(checkpoint, n + 1, checkpoint))
    if not marks or marks[-1] != n:
        marks.append(n)
    seen = np.searchsorted(first_index, marks, side="left")
    return [(int(m), int(s)) for m, s in zip(marks, seen)]


_CATALOG_MAGIC = "# tdltdc state catalog v1"


def save_catalog(
    catalog: StateCatalog,
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    """Write the catalog as readable text, one state per row."""
    lines = [
        _CATALOG_MAGIC,
        f"# n_taps: {catalog.n_taps}",
        f"# covered_range_fs: {catalog.covered_range}",
        f"# total_events: {catalog.total_events}",
        "# key: tap bits with the polarity flag above the top tap, hex",
        "# columns: seq key_hex count width_fs",
    ]
    for key, value in (extra_header or {}).items():
        lines.insert(1, f"# {key}: {value}")
    for r in catalog.records:
        lines.append(f"{r.seq} {r.state.key_hex} {r.count} {r.width}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_catalog(path: str | Path) -> StateCatalog:
    text = Path(path).read_text(encoding="utf-8")
    header: dict[str, str] = {}
    rows: list[tuple[int, str, int, int]] = []
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
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 columns")
        rows.append((int(parts[0]), parts[1], int(parts[2]), int(parts[3])))
    for field_name in ("n_taps", "covered_range_fs", "total_events"):
        if field_name not in header:
            raise ValueError(f"{path}: missing header field {field_name}")
    n_taps = int(header["n_taps"])
    records = []
    for seq, key_hex, count, width in rows:
        state = RawState.from_key(int(key_hex, 16), n_taps)
        if seq_value(state) != seq:
            raise ValueError(
                f"{path}: stored rank {seq} disagrees with state {key_hex}"
            )
        records.append(
            StateRecord(state=state, seq=seq, count=count, width=width)
        )
    return StateCatalog(
        records=tuple(records),
        covered_range=int(header["covered_range_fs"]),
        n_taps=n_taps,
        total_events=int(header["total_events"]),
    )
