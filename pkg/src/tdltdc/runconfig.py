"""Run configuration: a flat key = value text file and seed derivation.

Every tunable lives in one flat namespace so a run is fully described by
a short diffable file. All randomness descends from ``master_seed``
through named streams, which makes whole pipelines reproducible from the
configuration alone.
"""

from __future__ import annotations

import hashlib
import re
import zlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .timebase import (
    DEFAULT_IFPS_STEP_FS,
    DEFAULT_START_PERIOD_FS,
    DEFAULT_STOP_PERIOD_FS,
    ClockConfig,
)

# Bin-width targets characterized by default, femtoseconds.
DEFAULT_TARGETS_FS = (5_000, 10_040, 21_650, 43_870, 64_110, 87_730)

_INT_RE = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """All knobs for one end-to-end run. Field names are the file keys."""

    master_seed: int = 1
    start_period_fs: int = DEFAULT_START_PERIOD_FS
    stop_period_fs: int = DEFAULT_STOP_PERIOD_FS
    ifps_step_fs: int = DEFAULT_IFPS_STEP_FS
    model_n_clb: int = 4
    model_nominal_tap_delay_fs: int = 14_000
    model_mismatch_sigma_fs: int = 3_000
    model_skew_sigma_fs: int = 2_000
    model_file: str = ""
    collect_events: int = 10_000_000
    collect_checkpoint: int = 100_000
    configure_ref_min_fs: int = 2_000
    configure_ref_max_fs: int = 100_000
    configure_ref_step_fs: int = 200
    configure_fixed_point: int = 0
    target_lsb_fs: tuple[int, ...] = DEFAULT_TARGETS_FS
    density_events: int = 10_000_000
    density_windows: int = 4
    density_n_units: int = 0
    interval_events_per_step: int = 1_000
    interval_step_fs: int = 0
    interval_jitter_sigma_fs: int = 0
    interval_n_units: int = 0

    def __post_init__(self) -> None:
        if self.start_period_fs <= 0 or self.start_period_fs % 2:
            raise ConfigError("start_period_fs must be positive and even")
        positive = (
            "stop_period_fs",
            "ifps_step_fs",
            "model_n_clb",
            "model_nominal_tap_delay_fs",
            "collect_events",
            "collect_checkpoint",
            "configure_ref_min_fs",
            "configure_ref_step_fs",
            "density_events",
            "density_windows",
            "interval_events_per_step",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        non_negative = (
            "model_mismatch_sigma_fs",
            "model_skew_sigma_fs",
            "density_n_units",
            "interval_step_fs",
            "interval_jitter_sigma_fs",
            "interval_n_units",
        )
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.configure_ref_max_fs < self.configure_ref_min_fs:
            raise ConfigError("configure_ref_max_fs below configure_ref_min_fs")
        if self.configure_fixed_point not in (0, 1):
            raise ConfigError("configure_fixed_point must be 0 or 1")
        if not self.target_lsb_fs:
            raise ConfigError("target_lsb_fs must list at least one target")
        if any(t <= 0 for t in self.target_lsb_fs):
            raise ConfigError("target_lsb_fs entries must be positive")

    @property
    def clock(self) -> ClockConfig:
        return ClockConfig(
            start_period=self.start_period_fs,
            half_period=self.start_period_fs // 2,
            stop_period=self.stop_period_fs,
            ifps_step=self.ifps_step_fs,
        )

    def canonical_text(self) -> str:
        """Normalized serialization used for hashing and for saving."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _parse_value(field_type: str, key: str, raw: str):
    raw = raw.strip()
    if field_type == "int":
        if not _INT_RE.match(raw):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(raw)
    if field_type == "tuple[int, ...]":
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts or not all(_INT_RE.match(p) for p in parts):
            raise ConfigError(
                f"{key}: expected comma-separated integers, got {raw!r}"
            )
        return tuple(int(p) for p in parts)
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; # starts a comment, unknown keys fail."""
    known = {f.name: f for f in fields(RunConfig)}
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = _parse_value(str(known[key].type), key, value)
    try:
        return RunConfig(**seen)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(config.canonical_text(), encoding="utf-8")


def with_overrides(
    config: RunConfig,
    master_seed: int | None = None,
    target_lsb_fs: tuple[int, ...] | None = None,
) -> RunConfig:
    out = config
    if master_seed is not None:
        out = replace(out, master_seed=master_seed)
    if target_lsb_fs is not None:
        out = replace(out, target_lsb_fs=target_lsb_fs)
    return out


def derive_seed(master_seed: int, stream: str, index: int = 0) -> int:
    """Independent, reproducible seed for a named randomness stream."""
    label = zlib.crc32(stream.encode("utf-8"))
    sequence = np.random.SeedSequence([master_seed, label, index])
    return int(sequence.generate_state(1, np.uint64)[0])
