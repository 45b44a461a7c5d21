"""Exact state-to-bin encoding built from a catalog and a configuration.

The encoder is a lookup table: every cataloged state maps to the index of
the group that contains it. States never seen during collection have no
entry; they surface as missing codes rather than being silently binned,
because a wrong bin is worse than a flagged gap.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .binning import BinConfiguration
from .catalog import StateCatalog, seq_value
from .delayline import RawState

__all__ = [
    "Fine",
    "MissingCode",
    "StateEncoder",
    "build_encoder",
    "encode_batch",
    "save_encoder",
    "load_encoder",
]


@dataclass(frozen=True)
class Fine:
    """A successfully encoded event: the fine bin index."""

    index: int


@dataclass(frozen=True)
class MissingCode:
    """A state with no table entry; carries the offending state."""

    state: RawState


class StateEncoder:
    """Immutable lookup from raw states to fine bin indices.

    ``encode`` has no side effects on the mapping; the only mutable piece
    is a diagnostic counter of missing-code encounters. With
    ``nearest_fallback`` enabled a missing state is steered to the group
    of the nearest cataloged rank instead of being reported, but the
    counter still increments so the fallback can never hide table gaps.
    """

    def __init__(
        self,
        table: dict[int, int],
        n_taps: int,
        n_groups: int,
        covered_range: int,
        nearest_fallback: bool = False,
    ) -> None:
        if not table:
            raise ValueError("encoder table is empty")
        if any(not 0 <= g < n_groups for g in table.values()):
            raise ValueError("group index outside the configured range")
        self._table = dict(table)
        self.n_taps = n_taps
        self.n_groups = n_groups
        self.covered_range = covered_range
        self.nearest_fallback = nearest_fallback
        self.missing_count = 0
        # Nearest-rank directory: one representative group per distinct
        # rank, the entry with the smallest key winning ties.
        by_seq: dict[int, tuple[int, int]] = {}
        for key, group in self._table.items():
            seq = seq_value(RawState.from_key(key, n_taps))
            cur = by_seq.get(seq)
            if cur is None or key < cur[0]:
                by_seq[seq] = (key, group)
        self._seq_order = sorted(by_seq)
        self._seq_groups = [by_seq[s][1] for s in self._seq_order]
        # Kernel-facing copy of the table, sorted in row-comparison order.
        width = _kernels.n_words(n_taps)
        mask = (1 << 64) - 1
        keys = sorted(self._table)
        rows = np.array(
            [[(k >> (64 * w)) & mask for w in range(width)] for k in keys],
            dtype=np.uint64,
        )
        groups = np.array([self._table[k] for k in keys], dtype=np.int32)
        order = np.lexsort(tuple(rows[:, k] for k in range(width)))
        self._table_words = np.ascontiguousarray(rows[order])
        self._table_groups = groups[order]

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, state: RawState) -> bool:
        return state.key in self._table

    @property
    def lsb_fs(self) -> float:
        return self.covered_range / self.n_groups

    def _nearest_group(self, seq: int) -> int:
        pos = bisect_left(self._seq_order, seq)
        if pos == 0:
            return self._seq_groups[0]
        if pos == len(self._seq_order):
            return self._seq_groups[-1]
        before = self._seq_order[pos - 1]
        after = self._seq_order[pos]
        # Equal distance resolves to the lower rank.
        if seq - before <= after - seq:
            return self._seq_groups[pos - 1]
        return self._seq_groups[pos]

    def encode(self, state: RawState) -> Fine | MissingCode:
        """Map one state to its bin, or report it missing."""
        if state.n_taps != self.n_taps:
            raise ValueError("state width does not match the encoder table")
        group = self._table.get(state.key)
        if group is not None:
            return Fine(group)
        self.missing_count += 1
        if self.nearest_fallback:
            return Fine(self._nearest_group(seq_value(state)))
        return MissingCode(state)

    def table_items(self) -> list[tuple[int, int]]:
        return sorted(self._table.items())


def build_encoder(
    catalog: StateCatalog,
    config: BinConfiguration,
    nearest_fallback: bool = False,
) -> StateEncoder:
    """Assign every cataloged state to its configured group."""
    if config.fence[-1] != len(catalog):
        raise ValueError(
            f"configuration fences {config.fence[-1]} states, "
            f"catalog has {len(catalog)}"
        )
    if config.covered_range != catalog.covered_range:
        raise ValueError("configuration and catalog cover different ranges")
    table: dict[int, int] = {}
    for position, record in enumerate(catalog):
        group = bisect_right(config.fence, position) - 1
        table[record.state.key] = group
    return StateEncoder(
        table=table,
        n_taps=catalog.n_taps,
        n_groups=config.n_groups,
        covered_range=config.covered_range,
        nearest_fallback=nearest_fallback,
    )


def encode_batch(encoder: StateEncoder, words: np.ndarray) -> np.ndarray:
    """Vectorized :meth:`StateEncoder.encode` over a packed batch.

    Returns an int32 group index per event, -1 where the state is not in
    the table (only possible with the fallback disabled). The missing
    counter advances exactly as the scalar path would.
    """
    groups = _kernels.lookup_groups(
        words, encoder._table_words, encoder._table_groups
    )
    missing = groups < 0
    n_missing = int(missing.sum())
    if n_missing:
        encoder.missing_count += n_missing
        if encoder.nearest_fallback:
            seqs = _kernels.seq_values(words[missing], encoder.n_taps)
            fixed = np.fromiter(
                (encoder._nearest_group(int(s)) for s in seqs),
                dtype=np.int32,
                count=n_missing,
            )
            groups[missing] = fixed
    return groups


_ENCODER_MAGIC = "# tdltdc state encoder v1"


def save_encoder(
    encoder: StateEncoder,
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    lines = [
        _ENCODER_MAGIC,
        f"# n_taps: {encoder.n_taps}",
        f"# n_groups: {encoder.n_groups}",
        f"# covered_range_fs: {encoder.covered_range}",
        "# columns: key_hex group",
    ]
    for key, value in (extra_header or {}).items():
        lines.insert(1, f"# {key}: {value}")
    digits = (encoder.n_taps + 1 + 3) // 4
    for key, group in encoder.table_items():
        lines.append(f"{key:0{digits}x} {group}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_encoder(path: str | Path, nearest_fallback: bool = False) -> StateEncoder:
    text = Path(path).read_text(encoding="utf-8")
    header: dict[str, str] = {}
    table: dict[int, int] = {}
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
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 columns")
        table[int(parts[0], 16)] = int(parts[1])
    for field_name in ("n_taps", "n_groups", "covered_range_fs"):
        if field_name not in header:
            raise ValueError(f"{path}: missing header field {field_name}")
    return StateEncoder(
        table=table,
        n_taps=int(header["n_taps"]),
        n_groups=int(header["n_groups"]),
        covered_range=int(header["covered_range_fs"]),
        nearest_fallback=nearest_fallback,
    )
