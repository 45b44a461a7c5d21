"""Grouping of adjacent state widths into bins of near-uniform width.

A reference width is swept over a range; for each candidate the states
are first grouped greedily, then group boundaries are rebalanced, and
the result is scored by the relative spread of the group widths. Small
relative spread means uniform bins, which directly bounds the converter's
linearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _check_widths(widths: Sequence[int]) -> list[int]:
    out = [int(w) for w in widths]
    if not out:
        raise ValueError("no state widths given")
    if any(w < 0 for w in out):
        raise ValueError("state widths must be non-negative")
    if sum(out) <= 0:
        raise ValueError("state widths sum to zero")
    return out


def first_pass(widths: Sequence[int], ref: int) -> tuple[int, ...]:
    """Greedy left-to-right grouping against a reference width.

    Returns fence indices ``(0, ..., n_states)``: group ``g`` spans states
    ``fence[g]`` to ``fence[g+1] - 1``. A group is closed as soon as taking
    the next state would move its total width farther from the reference
    than it already is; the trailing group is closed by the end of the
    line no matter its width.
    """
    w = _check_widths(widths)
    if ref <= 0:
        raise ValueError("reference width must be positive")
    fence = [0]
    running = 0
    for i, width in enumerate(w):
        running += width
        if i == len(w) - 1:
            fence.append(len(w))
            break
        grow = abs(ref - (running + w[i + 1])) - abs(ref - running)
        if grow > 0:
            fence.append(i + 1)
            running = 0
    return tuple(fence)


def second_pass(
    widths: Sequence[int], fence: Sequence[int], fixed_point: bool = False
) -> tuple[int, ...]:
    """Rebalance group boundaries after the greedy pass.

    For each internal boundary, left to right, the first state of the
    right group is moved into the left group when that strictly reduces
    the width imbalance between the two groups. Each boundary moves at
    most one state per pass, and a move that would empty the right group
    is never taken. With ``fixed_point`` the pass repeats until no
    boundary moves; the default is the single pass, which in practice
    removes nearly all of the imbalance the greedy pass leaves behind.
    """
    w = _check_widths(widths)
    fence = list(fence)
    if (
        fence[0] != 0
        or fence[-1] != len(w)
        or any(a >= b for a, b in zip(fence, fence[1:]))
    ):
        raise ValueError(
            "fence must rise strictly from 0 to the state count"
        )
    prefix = [0]
    for width in w:
        prefix.append(prefix[-1] + width)
    while True:
        moved = False
        for j in range(1, len(fence) - 1):
            b = fence[j]
            if fence[j + 1] - b <= 1:
                continue
            left = prefix[b] - prefix[fence[j - 1]]
            right = prefix[fence[j + 1]] - prefix[b]
            shifted = w[b]
            balance = abs(left - right) - abs(
                (left + shifted) - (right - shifted)
            )
            if balance > 0:
                fence[j] = b + 1
                moved = True
        if not fixed_point or not moved:
            return tuple(fence)


def group_widths(widths: Sequence[int], fence: Sequence[int]) -> list[int]:
    w = _check_widths(widths)
    return [sum(w[a:b]) for a, b in zip(fence, fence[1:])]


def rse(group_widths_fs: Sequence[int]) -> float:
    """Sample standard deviation of group widths over their mean.

    Computed from exact integer sums, with the only rounding in the final
    square root.
    """
    w = [int(x) for x in group_widths_fs]
    n = len(w)
    if n < 2:
        raise ValueError("relative spread needs at least two groups")
    s = sum(w)
    if s <= 0:
        raise ValueError("group widths sum to zero")
    q = sum(x * x for x in w)
    var_num = n * q - s * s
    return math.sqrt(n * var_num / (n - 1)) / s


@dataclass(frozen=True)
class BinConfiguration:
    """One scored grouping: the fence, its group widths, and the spread."""

    fence: tuple[int, ...]
    group_widths: tuple[int, ...]
    covered_range: int
    ref: int
    rse: float
    fixed_point: bool = False

    def __post_init__(self) -> None:
        if len(self.fence) != len(self.group_widths) + 1:
            raise ValueError("fence and group widths disagree on group count")
        if self.fence[0] != 0 or any(
            a >= b for a, b in zip(self.fence, self.fence[1:])
        ):
            raise ValueError("fence must rise strictly from 0")
        if sum(self.group_widths) != self.covered_range:
            raise ValueError("group widths must tile the covered range")

    @property
    def n_groups(self) -> int:
        return len(self.group_widths)

    @property
    def lsb_fs(self) -> float:
        """Nominal bin width implied by the group count."""
        return self.covered_range / self.n_groups


def build_configuration(
    widths: Sequence[int],
    covered_range: int,
    ref: int,
    fixed_point: bool = False,
) -> BinConfiguration:
    """Run both passes for one reference width and score the result."""
    w = _check_widths(widths)
    if sum(w) != covered_range:
        raise ValueError("state widths must tile the covered range")
    fence = second_pass(w, first_pass(w, ref), fixed_point=fixed_point)
    groups = group_widths(w, fence)
    return BinConfiguration(
        fence=tuple(fence),
        group_widths=tuple(groups),
        covered_range=covered_range,
        ref=ref,
        rse=rse(groups),
        fixed_point=fixed_point,
    )


def sweep(
    widths: Sequence[int],
    covered_range: int,
    ref_min: int,
    ref_max: int,
    ref_step: int,
    fixed_point: bool = False,
) -> list[BinConfiguration]:
    """Score every reference width on a grid; one configuration per ref."""
    if ref_min <= 0 or ref_max < ref_min or ref_step <= 0:
        raise ValueError("need 0 < ref_min <= ref_max and a positive step")
    return [
        build_configuration(widths, covered_range, ref, fixed_point=fixed_point)
        for ref in range(ref_min, ref_max + 1, ref_step)
    ]


def per_group_count_minima(
    configs: Iterable[BinConfiguration],
) -> dict[int, BinConfiguration]:
    """Best (lowest-spread) configuration for each distinct group count."""
    best: dict[int, BinConfiguration] = {}
    for cfg in configs:
        cur = best.get(cfg.n_groups)
        if cur is None or (cfg.rse, cfg.ref) < (cur.rse, cur.ref):
            best[cfg.n_groups] = cfg
    return best


def choose_for_target(
    configs: Sequence[BinConfiguration], target_lsb_fs: int
) -> BinConfiguration:
    """Pick the configuration whose bin width best matches a target.

    Prefers the group count closest to the one the target implies, then
    the lowest spread, then the smaller reference width. The achieved bin
    width can differ from the target when the catalog has too few states
    to slice finer; callers should read ``lsb_fs`` off the result.
    """
    if not configs:
        raise ValueError("no configurations to choose from")
    if target_lsb_fs <= 0:
        raise ValueError("target bin width must be positive")
    covered = configs[0].covered_range
    wanted = round(covered / target_lsb_fs)
    return min(
        configs,
        key=lambda c: (abs(c.n_groups - wanted), c.rse, c.ref),
    )


def predict_linearity(
    config: BinConfiguration,
) -> tuple[np.ndarray, np.ndarray]:
    """Differential and integral nonlinearity implied by the group widths.

    Exact integer numerators guarantee the differential terms sum to zero
    and the cumulative curve returns to zero at the last bin.
    """
    n = config.n_groups
    c = config.covered_range
    nums = np.array(
        [n * w - c for w in config.group_widths], dtype=np.int64
    )
    assert int(nums.sum()) == 0
    dnl = nums / c
    inl = np.cumsum(nums) / c
    return dnl, inl


def optimal_partition_rse(
    widths: Sequence[int], n_groups: int, limit: int = 22
) -> tuple[float, tuple[int, ...]]:
    """Exhaustive best contiguous partition into a fixed number of groups.

    Reference answer for validating the two-pass heuristic; exponential in
    the state count, hence the hard size limit.
    """
    w = _check_widths(widths)
    s = len(w)
    if s > limit:
        raise ValueError(f"exhaustive search limited to {limit} states")
    if not 2 <= n_groups <= s:
        raise ValueError("group count must be between 2 and the state count")
    prefix = [0]
    for width in w:
        prefix.append(prefix[-1] + width)
    best: tuple[float, tuple[int, ...]] | None = None
    for cuts in combinations(range(1, s), n_groups - 1):
        fence = (0, *cuts, s)
        groups = [prefix[b] - prefix[a] for a, b in zip(fence, fence[1:])]
        score = rse(groups)
        if best is None or score < best[0]:
            best = (score, fence)
    assert best is not None
    return best


_CONFIG_MAGIC = "# tdltdc bin configurations v1"


def save_configurations(
    configs: Sequence[BinConfiguration],
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    """Write scored configurations, one per row, fences as colon lists."""
    if not configs:
        raise ValueError("nothing to save")
    covered = configs[0].covered_range
    if any(c.covered_range != covered for c in configs):
        raise ValueError("configurations cover different ranges")
    lines = [
        _CONFIG_MAGIC,
        f"# covered_range_fs: {covered}",
        "# columns: ref_fs n_groups lsb_fs rse fixed_point fence group_widths_fs",
    ]
    for key, value in (extra_header or {}).items():
        lines.insert(1, f"# {key}: {value}")
    for c in configs:
        fence = ":".join(str(i) for i in c.fence)
        groups = ":".join(str(wd) for wd in c.group_widths)
        lines.append(
            f"{c.ref} {c.n_groups} {c.lsb_fs!r} {c.rse!r} "
            f"{int(c.fixed_point)} {fence} {groups}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_configurations(path: str | Path) -> list[BinConfiguration]:
    text = Path(path).read_text(encoding="utf-8")
    covered = None
    out: list[BinConfiguration] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("covered_range_fs:"):
                covered = int(body.split(":", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 columns")
        if covered is None:
            raise ValueError(f"{path}: missing covered_range_fs header")
        fence = tuple(int(x) for x in parts[5].split(":"))
        groups = tuple(int(x) for x in parts[6].split(":"))
        cfg = BinConfiguration(
            fence=fence,
            group_widths=groups,
            covered_range=covered,
            ref=int(parts[0]),
            rse=float(parts[3]),
            fixed_point=bool(int(parts[4])),
        )
        if cfg.n_groups != int(parts[1]):
            raise ValueError(f"{path}:{lineno}: group count disagrees with fence")
        out.append(cfg)
    if not out:
        raise ValueError(f"{path}: no configurations found")
    return out
