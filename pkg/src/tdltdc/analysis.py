"""Linearity statistics, spread cross-checks, and interval sweeps.

Code density converts a uniform-illumination histogram into differential
and integral nonlinearity. The interval sweep steps a known delay across
the measured range and compares each converter reading against a straight
line fitted to the sweep, which exposes missing codes and bounds the
worst-case reading error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .binning import BinConfiguration, rse
from .delayline import DelayLineModel, propagate_batch
from .encoder import StateEncoder, encode_batch
from .histogram import MAX_BINS, HistogramSnapshot, combine_batch

__all__ = [
    "LinearityReport",
    "SweepReport",
    "code_density",
    "compare_rse",
    "time_interval_sweep",
    "residual_envelope",
    "write_density_csv",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class LinearityReport:
    """Code-density linearity of one histogram."""

    counts: np.ndarray
    dnl: np.ndarray
    inl: np.ndarray
    n_events: int
    lsb_fs: float

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def empty_bin_fraction(self) -> float:
        return float((self.counts == 0).mean())

    @property
    def max_abs_dnl(self) -> float:
        return float(np.abs(self.dnl).max())

    @property
    def max_abs_inl(self) -> float:
        return float(np.abs(self.inl).max())

    @property
    def measured_rse(self) -> float:
        """Relative spread of bin occupancies, the density-side analog of
        the configuration's predicted spread."""
        return rse([int(c) for c in self.counts])


def code_density(
    histograms: np.ndarray | list[int] | Sequence[HistogramSnapshot],
    lsb_fs: float,
    n_groups: int | None = None,
    n_events: int | None = None,
    saturated_lost: int = 0,
) -> LinearityReport:
    """Differential and integral nonlinearity from a flat-illumination
    histogram.

    Accepts a raw count vector or window snapshots (summed bin-wise).
    Numerators are exact integers, so the differential terms sum to zero
    and the integral curve closes at zero by construction, not by luck.
    """
    if (
        isinstance(histograms, Sequence)
        and histograms
        and isinstance(histograms[0], HistogramSnapshot)
    ):
        counts = np.zeros(histograms[0].n_bins, dtype=np.int64)
        for snap in histograms:
            counts += snap.counts
    else:
        counts = np.asarray(histograms, dtype=np.int64)
    if counts.ndim != 1 or counts.shape[0] < 2:
        raise ValueError("need a one-dimensional histogram with >= 2 bins")
    if n_groups is not None and counts.shape[0] != n_groups:
        raise ValueError(
            f"histogram has {counts.shape[0]} bins, expected {n_groups}"
        )
    if np.any(counts < 0):
        raise ValueError("negative bin count")
    total = int(counts.sum())
    if total <= 0:
        raise ValueError("empty histogram has no density estimate")
    if saturated_lost > 0:
        warnings.warn(
            f"{saturated_lost} increments hit saturated counters; "
            "affected bin counts are biased low",
            stacklevel=2,
        )
    n = counts.shape[0]
    nums = n * counts - total
    assert int(nums.sum()) == 0
    dnl = nums / total
    inl = np.cumsum(nums) / total
    return LinearityReport(
        counts=counts,
        dnl=dnl,
        inl=inl,
        n_events=total if n_events is None else n_events,
        lsb_fs=lsb_fs,
    )


def compare_rse(config: BinConfiguration, report: LinearityReport) -> float:
    """Relative gap between the spread predicted from group widths and
    the spread measured from code density.

    The density histogram must cover a whole number of fine ranges so
    every group is illuminated equally.
    """
    if report.n_bins % config.n_groups != 0:
        raise ValueError(
            "histogram bins are not a whole number of fine ranges"
        )
    folds = report.n_bins // config.n_groups
    folded = report.counts.reshape(folds, config.n_groups).sum(axis=0)
    measured = rse([int(c) for c in folded])
    predicted = config.rse
    if predicted == 0:
        return abs(measured)
    return abs(measured - predicted) / predicted


@dataclass(frozen=True)
class SweepReport:
    """Interval-sweep outcome: converter reading per programmed delay.

    ``outputs[k]`` is -1 and ``residuals[k]`` is NaN where step ``k``
    produced an all-zero histogram (a blank step, meaning a missing
    code). The line fit uses only the non-blank steps. Steps whose
    reading goes backwards relative to the previous non-blank step are
    listed in ``order_violations``; a functioning converter has none.
    """

    inputs_fs: tuple[int, ...]
    outputs: tuple[int, ...]
    residuals: tuple[float, ...]
    blank_steps: tuple[int, ...]
    order_violations: tuple[int, ...]
    slope: float
    intercept: float
    populated_bins: tuple[int, ...]
    halfmax_bins: tuple[int, ...]
    n_bins: int
    events_per_step: int
    lsb_fs: float

    @property
    def n_steps(self) -> int:
        return len(self.inputs_fs)


def residual_envelope(report: SweepReport) -> tuple[float, float]:
    """Smallest and largest residual over the non-blank steps."""
    values = [r for r in report.residuals if not math.isnan(r)]
    if not values:
        raise ValueError("sweep has no usable steps")
    return (min(values), max(values))


def time_interval_sweep(
    model: DelayLineModel,
    encoder: StateEncoder,
    n_units: int,
    step_fs: int | None = None,
    events_per_step: int = 1000,
    jitter_sigma_fs: int = 0,
    seed: int | None = None,
) -> SweepReport:
    """Step a programmed delay across ``n_units`` measurement cycles.

    Each step fires ``events_per_step`` identical intervals (plus optional
    Gaussian jitter), histograms the full coarse-plus-fine readings, and
    takes the histogram mode as the converter output for that step.
    """
    clock = model.clock
    n_fine = encoder.n_groups
    if step_fs is None:
        step_fs = clock.ifps_step
    if step_fs <= 0 or n_units <= 0 or events_per_step <= 0:
        raise ValueError("sweep parameters must be positive")
    n_bins = n_units * n_fine
    if n_bins > MAX_BINS:
        raise ValueError(
            f"{n_units} cycles x {n_fine} bins exceeds the "
            f"{MAX_BINS}-bin budget"
        )
    span = n_units * clock.start_period
    inputs = list(range(0, span, step_fs))
    rng = np.random.default_rng(seed)
    outputs: list[int] = []
    residual_mask: list[bool] = []
    populated: list[int] = []
    halfmax: list[int] = []
    for delay in inputs:
        times = np.full(events_per_step, delay, dtype=np.int64)
        if jitter_sigma_fs > 0:
            times = times + np.rint(
                rng.normal(0.0, jitter_sigma_fs, events_per_step)
            ).astype(np.int64)
            np.clip(times, 0, span - 1, out=times)
        coarse = times // clock.start_period
        phases = times % clock.start_period
        groups = encode_batch(encoder, propagate_batch(model, phases))
        valid = groups >= 0
        fine = groups[valid].astype(np.int64)
        bins = combine_batch(coarse[valid], fine, n_fine)
        counts = np.bincount(bins, minlength=n_bins)
        peak = int(counts.max()) if counts.size else 0
        if peak == 0:
            outputs.append(-1)
            residual_mask.append(False)
            populated.append(0)
            halfmax.append(0)
            continue
        outputs.append(int(np.argmax(counts)))
        residual_mask.append(True)
        populated.append(int((counts > 0).sum()))
        halfmax.append(int((2 * counts >= peak).sum()))
    good = [k for k, ok in enumerate(residual_mask) if ok]
    if len(good) < 2:
        raise ValueError("sweep produced fewer than two usable steps")
    violations = [
        b for a, b in zip(good, good[1:]) if outputs[b] < outputs[a]
    ]
    x = np.array([inputs[k] for k in good], dtype=np.float64)
    y = np.array([outputs[k] for k in good], dtype=np.float64)
    x_mean = x.mean()
    y_mean = y.mean()
    denom = float(((x - x_mean) ** 2).sum())
    slope = float(((x - x_mean) * (y - y_mean)).sum() / denom)
    intercept = float(y_mean - slope * x_mean)
    residuals = [
        float(outputs[k] - (slope * inputs[k] + intercept))
        if residual_mask[k]
        else math.nan
        for k in range(len(inputs))
    ]
    return SweepReport(
        inputs_fs=tuple(inputs),
        outputs=tuple(outputs),
        residuals=tuple(residuals),
        blank_steps=tuple(
            k for k, ok in enumerate(residual_mask) if not ok
        ),
        order_violations=tuple(violations),
        slope=slope,
        intercept=intercept,
        populated_bins=tuple(populated),
        halfmax_bins=tuple(halfmax),
        n_bins=n_bins,
        events_per_step=events_per_step,
        lsb_fs=encoder.lsb_fs,
    )


def write_density_csv(
    report: LinearityReport,
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    lines = []
    for key, value in (extra_header or {}).items():
        lines.append(f"# {key}: {value}")
    lines += [
        f"# lsb_fs: {report.lsb_fs!r}",
        f"# n_events: {report.n_events}",
        f"# empty_bin_fraction: {report.empty_bin_fraction!r}",
        "bin,count,dnl,inl",
    ]
    for i in range(report.n_bins):
        lines.append(
            f"{i},{int(report.counts[i])},"
            f"{float(report.dnl[i])!r},{float(report.inl[i])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sweep_csv(
    report: SweepReport,
    path: str | Path,
    extra_header: dict[str, str] | None = None,
) -> None:
    lines = []
    for key, value in (extra_header or {}).items():
        lines.append(f"# {key}: {value}")
    blanks = ":".join(str(b) for b in report.blank_steps)
    violations = ":".join(str(v) for v in report.order_violations)
    lines += [
        f"# slope_bins_per_fs: {report.slope!r}",
        f"# intercept_bins: {report.intercept!r}",
        f"# events_per_step: {report.events_per_step}",
        f"# n_bins: {report.n_bins}",
        f"# lsb_fs: {report.lsb_fs!r}",
        f"# blank_steps: {blanks}",
        f"# order_violations: {violations}",
        "step,input_fs,output_bin,residual_lsb,populated_bins,halfmax_bins",
    ]
    for k in range(report.n_steps):
        r = report.residuals[k]
        r_text = "nan" if math.isnan(r) else repr(float(r))
        lines.append(
            f"{k},{report.inputs_fs[k]},{report.outputs[k]},{r_text},"
            f"{report.populated_bins[k]},{report.halfmax_bins[k]}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
