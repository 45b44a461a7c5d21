"""Stage drivers shared by the command-line interface.

Each stage reads its inputs from the output directory of the previous
one, so stages can be rerun independently. Every artifact carries the
configuration hash and the seeds that produced it; two runs of the same
configuration produce byte-identical trees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    code_density,
    compare_rse,
    residual_envelope,
    time_interval_sweep,
    write_density_csv,
    write_sweep_csv,
)
from .binning import (
    BinConfiguration,
    choose_for_target,
    optimal_partition_rse,
    per_group_count_minima,
    save_configurations,
    sweep,
)
from .catalog import (
    StateCatalog,
    build_catalog_from_words,
    discovery_curve,
    estimate_widths,
    load_catalog,
    save_catalog,
)
from .delayline import (
    DelayLineModel,
    build_model,
    load_model,
    propagate_batch,
    save_model,
)
from .encoder import build_encoder, encode_batch, save_encoder
from .events import EventSource, sample_times_and_phases
from .histogram import MAX_BINS, HistogramPair, combine_batch
from .runconfig import RunConfig, derive_seed

_CHUNK_EVENTS = 2_000_000

# Preferred long-range measurement spans, femtoseconds. The widest span
# whose bin count fits the interleaving budget wins; a single cycle is
# the fallback.
_LONG_RANGE_SPANS_FS = (8_000_000, 5_000_000)


class MissingInputError(FileNotFoundError):
    """A stage was started before the stages producing its inputs."""


def measurement_units(
    n_fine: int, start_period: int, requested: int = 0
) -> int:
    """Number of measurement cycles a density or sweep run spans."""
    if requested:
        if requested * n_fine > MAX_BINS:
            raise ValueError(
                f"{requested} cycles x {n_fine} bins exceeds the "
                f"{MAX_BINS}-bin budget"
            )
        return requested
    for span in _LONG_RANGE_SPANS_FS:
        units = -(-span // start_period)
        if units * n_fine <= MAX_BINS:
            return units
    return 1


def _provenance(config: RunConfig, stage: str) -> dict[str, str]:
    return {
        "tool": f"tdltdc {__version__}",
        "config_hash": config.config_hash(),
        "master_seed": str(config.master_seed),
        "stage": stage,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _read_json(path: Path, stage: str) -> dict:
    if not path.exists():
        raise MissingInputError(
            f"{path.name} not found; run the {stage} stage first"
        )
    return json.loads(path.read_text(encoding="utf-8"))


def _target_label(target_fs: int) -> str:
    return f"lsb{target_fs:06d}fs"


def _load_stage_model(out_dir: Path) -> DelayLineModel:
    path = out_dir / "model.txt"
    if not path.exists():
        raise MissingInputError("model.txt not found; run collect first")
    return load_model(path)


def _load_stage_catalog(out_dir: Path) -> StateCatalog:
    path = out_dir / "catalog.txt"
    if not path.exists():
        raise MissingInputError("catalog.txt not found; run collect first")
    return load_catalog(path)


def _stage_model(config: RunConfig) -> DelayLineModel:
    if config.model_file:
        return load_model(config.model_file)
    return build_model(
        n_clb=config.model_n_clb,
        nominal_tap_delay=config.model_nominal_tap_delay_fs,
        mismatch_sigma=config.model_mismatch_sigma_fs,
        skew_sigma=config.model_skew_sigma_fs,
        seed=config.master_seed,
        clock=config.clock,
    )


def run_collect(config: RunConfig, out_dir: Path) -> StateCatalog:
    """Expose the line to uniform illumination and catalog what it emits."""
    out_dir.mkdir(parents=True, exist_ok=True)
    model = _stage_model(config)
    source = EventSource(
        kind="uniform-phase",
        seed=derive_seed(config.master_seed, "collect"),
    )
    _, phases = sample_times_and_phases(
        source, config.collect_events, model.clock
    )
    words = propagate_batch(model, phases)
    catalog = estimate_widths(
        build_catalog_from_words(
            words, model.n_taps, model.clock.start_period
        )
    )
    curve = discovery_curve(words, config.collect_checkpoint)
    header = _provenance(config, "collect")
    save_model(model, out_dir / "model.txt")
    save_catalog(catalog, out_dir / "catalog.txt", extra_header=header)
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append("events,distinct_states")
    lines += [f"{n},{s}" for n, s in curve]
    (out_dir / "discovery.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )
    _write_json(
        out_dir / "collect_summary.json",
        {
            "provenance": header,
            "events": catalog.total_events,
            "distinct_states": len(catalog),
            "covered_range_fs": catalog.covered_range,
            "n_taps": catalog.n_taps,
            "discovery_tail": [list(curve[-1])],
        },
    )
    return catalog


_SELECTED_MAGIC = "# tdltdc selected configurations v1"


def _save_selected(
    selections: list[tuple[int, BinConfiguration]],
    path: Path,
    header: dict[str, str],
    covered_range: int,
) -> None:
    lines = [
        _SELECTED_MAGIC,
        f"# covered_range_fs: {covered_range}",
        "# columns: target_lsb_fs ref_fs n_groups lsb_fs rse fence group_widths_fs",
    ]
    for key, value in header.items():
        lines.insert(1, f"# {key}: {value}")
    for target, cfg in selections:
        fence = ":".join(str(i) for i in cfg.fence)
        groups = ":".join(str(w) for w in cfg.group_widths)
        lines.append(
            f"{target} {cfg.ref} {cfg.n_groups} {cfg.lsb_fs!r} "
            f"{cfg.rse!r} {fence} {groups}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_selected(path: Path) -> list[tuple[int, BinConfiguration]]:
    if not path.exists():
        raise MissingInputError(
            "selected_configs.txt not found; run configure first"
        )
    covered = None
    out: list[tuple[int, BinConfiguration]] = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("covered_range_fs:"):
                covered = int(body.split(":", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 7 or covered is None:
            raise ValueError(f"{path}: malformed selection line")
        fence = tuple(int(x) for x in parts[5].split(":"))
        groups = tuple(int(x) for x in parts[6].split(":"))
        out.append(
            (
                int(parts[0]),
                BinConfiguration(
                    fence=fence,
                    group_widths=groups,
                    covered_range=covered,
                    ref=int(parts[1]),
                    rse=float(parts[4]),
                ),
            )
        )
    if not out:
        raise ValueError(f"{path}: no selections found")
    return out


def run_configure(
    config: RunConfig, out_dir: Path
) -> list[tuple[int, BinConfiguration]]:
    """Sweep reference widths, score them, and pick one per target."""
    catalog = _load_stage_catalog(out_dir)
    widths = catalog.widths().tolist()
    configs = sweep(
        widths,
        catalog.covered_range,
        config.configure_ref_min_fs,
        config.configure_ref_max_fs,
        config.configure_ref_step_fs,
        fixed_point=bool(config.configure_fixed_point),
    )
    minima = per_group_count_minima(configs)
    selections = [
        (target, choose_for_target(configs, target))
        for target in config.target_lsb_fs
    ]
    header = _provenance(config, "configure")
    save_configurations(
        configs, out_dir / "configurations.txt", extra_header=header
    )
    _save_selected(
        selections,
        out_dir / "selected_configs.txt",
        header,
        catalog.covered_range,
    )
    # Scored table, one row per reference width. The exhaustive-optimum
    # columns are only filled for small catalogs where the search is
    # tractable; they stay empty otherwise.
    small = len(catalog) <= 12
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(
        "ref_fs,n_groups,lsb_fs,rse,is_per_n_minimum,optimal_rse,rse_gap"
    )
    for cfg in configs:
        is_min = int(minima.get(cfg.n_groups) is cfg)
        if small and cfg.n_groups >= 2:
            best_rse, _ = optimal_partition_rse(widths, cfg.n_groups)
            gap = cfg.rse - best_rse
            tail = f"{best_rse!r},{gap!r}"
        else:
            tail = ","
        lines.append(
            f"{cfg.ref},{cfg.n_groups},{cfg.lsb_fs!r},{cfg.rse!r},"
            f"{is_min},{tail}"
        )
    (out_dir / "rse_table.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )
    enc_dir = out_dir / "encoders"
    enc_dir.mkdir(exist_ok=True)
    for target, cfg in selections:
        enc = build_encoder(catalog, cfg)
        save_encoder(
            enc,
            enc_dir / f"{_target_label(target)}.txt",
            extra_header={**header, "target_lsb_fs": str(target)},
        )
    _write_json(
        out_dir / "configure_summary.json",
        {
            "provenance": header,
            "n_configurations": len(configs),
            "per_group_count_minima": {
                str(n): {"ref_fs": c.ref, "rse": c.rse}
                for n, c in sorted(minima.items())
            },
            "selections": {
                str(t): {
                    "ref_fs": c.ref,
                    "n_groups": c.n_groups,
                    "lsb_fs": c.lsb_fs,
                    "rse": c.rse,
                }
                for t, c in selections
            },
        },
    )
    return selections


def histogram_windows(
    events: int, worst_bin_probability: float, requested: int = 1
) -> int:
    """Window count that keeps the busiest counter clear of saturation.

    The counters hold 65535; reading out whenever the expected worst-bin
    occupancy reaches 49152 leaves headroom of more than twenty standard
    deviations, so saturation losses stay at exactly zero in practice.
    """
    needed = -(-int(events * worst_bin_probability) // 49152)
    return max(requested, needed, 1)


def density_histogram(
    model: DelayLineModel,
    encoder,
    units: int,
    events: int,
    windows: int,
    seed: int,
) -> tuple[np.ndarray, HistogramPair, int]:
    """Uniform-illumination run over ``units`` measurement cycles.

    Returns the summed window counts, the engine (for its loss counters),
    and the number of events dropped as missing codes.
    """
    clock = model.clock
    n_fine = encoder.n_groups
    n_bins = units * n_fine
    span = units * clock.start_period
    total_time = events * clock.stop_period
    integration = -(-total_time // windows)
    engine = HistogramPair(n_bins, n_fine, integration, encoder.lsb_fs)
    rng = np.random.default_rng(seed)
    missing_before = encoder.missing_count
    counts = np.zeros(n_bins, dtype=np.int64)
    done = 0
    while done < events:
        n = min(_CHUNK_EVENTS, events - done)
        times = (np.arange(done + 1, done + n + 1, dtype=np.int64)) * (
            clock.stop_period
        )
        arrivals = rng.integers(0, span, size=n, dtype=np.int64)
        coarse = arrivals // clock.start_period
        phases = arrivals % clock.start_period
        groups = encode_batch(encoder, propagate_batch(model, phases))
        valid = groups >= 0
        bins = combine_batch(
            coarse[valid], groups[valid].astype(np.int64), n_fine
        )
        for snap in engine.accumulate(bins, times[valid]):
            counts += snap.counts
        done += n
    counts += engine.swap_and_read(engine.window_end).counts
    missing = encoder.missing_count - missing_before
    assert int(counts.sum()) == engine.accepted
    return counts, engine, missing


def _density_one(
    model: DelayLineModel,
    catalog: StateCatalog,
    cfg: BinConfiguration,
    config: RunConfig,
    target: int,
    out_dir: Path,
    header: dict[str, str],
) -> dict:
    clock = model.clock
    n_fine = cfg.n_groups
    units = measurement_units(
        n_fine, clock.start_period, config.density_n_units
    )
    encoder = build_encoder(catalog, cfg)
    label = _target_label(target)
    result = {
        "target_lsb_fs": target,
        "achieved_lsb_fs": cfg.lsb_fs,
        "n_groups": n_fine,
        "predicted_rse": cfg.rse,
    }
    for range_name, n_units in (("short", 1), ("long", units)):
        windows = histogram_windows(
            config.density_events,
            max(cfg.group_widths) / (n_units * cfg.covered_range),
            config.density_windows,
        )
        counts, engine, missing = density_histogram(
            model,
            encoder,
            n_units,
            config.density_events,
            windows,
            derive_seed(
                config.master_seed, f"density-{range_name}", index=target
            ),
        )
        report = code_density(
            counts,
            cfg.lsb_fs,
            n_events=config.density_events,
            saturated_lost=engine.saturated_lost,
        )
        write_density_csv(
            report,
            out_dir / "density" / f"{label}_{range_name}.csv",
            extra_header={
                **header,
                "target_lsb_fs": str(target),
                "range": range_name,
                "n_units": str(n_units),
            },
        )
        result[range_name] = {
            "n_units": n_units,
            "n_bins": n_units * n_fine,
            "n_windows": windows,
            "events": config.density_events,
            "stored": int(counts.sum()),
            "missing_codes": missing,
            "rejected": engine.rejected,
            "saturated_lost": engine.saturated_lost,
            "empty_bin_fraction": report.empty_bin_fraction,
            "max_abs_dnl": report.max_abs_dnl,
            "max_abs_inl": report.max_abs_inl,
            "rse_gap": compare_rse(cfg, report),
        }
    return result


def run_density(config: RunConfig, out_dir: Path) -> dict:
    """Uniform-illumination histogram and linearity per selected target."""
    model = _load_stage_model(out_dir)
    catalog = _load_stage_catalog(out_dir)
    selections = load_selected(out_dir / "selected_configs.txt")
    wanted = set(config.target_lsb_fs)
    selections = [s for s in selections if s[0] in wanted]
    if not selections:
        raise MissingInputError(
            "no selected configuration matches the requested targets; "
            "rerun configure"
        )
    header = _provenance(config, "density")
    (out_dir / "density").mkdir(parents=True, exist_ok=True)
    results = [
        _density_one(model, catalog, cfg, config, target, out_dir, header)
        for target, cfg in selections
    ]
    payload = {
        "provenance": header,
        "targets": {str(r["target_lsb_fs"]): r for r in results},
    }
    _write_json(out_dir / "density_summary.json", payload)
    return payload


def run_interval(config: RunConfig, out_dir: Path) -> dict:
    """Stepped-delay sweep per selected target."""
    model = _load_stage_model(out_dir)
    catalog = _load_stage_catalog(out_dir)
    selections = load_selected(out_dir / "selected_configs.txt")
    wanted = set(config.target_lsb_fs)
    selections = [s for s in selections if s[0] in wanted]
    if not selections:
        raise MissingInputError(
            "no selected configuration matches the requested targets; "
            "rerun configure"
        )
    header = _provenance(config, "interval")
    (out_dir / "interval").mkdir(parents=True, exist_ok=True)
    step = config.interval_step_fs or model.clock.ifps_step
    results = {}
    for target, cfg in selections:
        encoder = build_encoder(catalog, cfg)
        units = measurement_units(
            cfg.n_groups, model.clock.start_period, config.interval_n_units
        )
        report = time_interval_sweep(
            model,
            encoder,
            n_units=units,
            step_fs=step,
            events_per_step=config.interval_events_per_step,
            jitter_sigma_fs=config.interval_jitter_sigma_fs,
            seed=derive_seed(config.master_seed, "interval", index=target),
        )
        label = _target_label(target)
        write_sweep_csv(
            report,
            out_dir / "interval" / f"{label}.csv",
            extra_header={**header, "target_lsb_fs": str(target)},
        )
        lo, hi = residual_envelope(report)
        narrow = sum(1 for h in report.halfmax_bins if 0 < h <= 2)
        results[str(target)] = {
            "target_lsb_fs": target,
            "achieved_lsb_fs": cfg.lsb_fs,
            "n_steps": report.n_steps,
            "blank_steps": list(report.blank_steps),
            "order_violations": list(report.order_violations),
            "slope_bins_per_fs": report.slope,
            "intercept_bins": report.intercept,
            "residual_min_lsb": lo,
            "residual_max_lsb": hi,
            "narrow_response_fraction": narrow / report.n_steps,
        }
    payload = {"provenance": header, "targets": results}
    _write_json(out_dir / "interval_summary.json", payload)
    return payload


def run_report(config: RunConfig, out_dir: Path) -> dict:
    """Merge the stage summaries into one report document and table."""
    collect = _read_json(out_dir / "collect_summary.json", "collect")
    configure = _read_json(out_dir / "configure_summary.json", "configure")
    density = _read_json(out_dir / "density_summary.json", "density")
    interval = _read_json(out_dir / "interval_summary.json", "interval")
    header = _provenance(config, "report")
    summary = {
        "provenance": header,
        "collect": collect,
        "configure": configure,
        "density": density,
        "interval": interval,
    }
    _write_json(out_dir / "summary.json", summary)
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(
        "target_lsb_fs,achieved_lsb_fs,n_groups,predicted_rse,"
        "short_rse_gap,short_empty_bin_fraction,"
        "short_max_abs_dnl,short_max_abs_inl,"
        "long_empty_bin_fraction,long_max_abs_dnl,long_max_abs_inl,"
        "blank_steps,residual_min_lsb,residual_max_lsb"
    )
    for key in sorted(density["targets"], key=int):
        d = density["targets"][key]
        s, g = d["short"], d["long"]
        i = interval["targets"].get(key)
        blanks = str(len(i["blank_steps"])) if i else ""
        lo = repr(i["residual_min_lsb"]) if i else ""
        hi = repr(i["residual_max_lsb"]) if i else ""
        lines.append(
            f"{d['target_lsb_fs']},{d['achieved_lsb_fs']!r},"
            f"{d['n_groups']},{d['predicted_rse']!r},"
            f"{s['rse_gap']!r},{s['empty_bin_fraction']!r},"
            f"{s['max_abs_dnl']!r},{s['max_abs_inl']!r},"
            f"{g['empty_bin_fraction']!r},{g['max_abs_dnl']!r},"
            f"{g['max_abs_inl']!r},{blanks},{lo},{hi}"
        )
    (out_dir / "report.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )
    return summary
