"""Compare the compiled kernels against the pure-Python fallbacks.

Run from a checkout or an installed tree:

    python3 benchmarks/bench_kernels.py [--events N]

Times the three hot kernels (state packing, table lookup, histogram
fill) and one end-to-end propagate-encode-accumulate pass on a
reference-sized model, for whichever backends are importable.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tdltdc import _kernels
from tdltdc._kernels import _py
from tdltdc.binning import choose_for_target, sweep
from tdltdc.catalog import build_catalog_from_words, estimate_widths
from tdltdc.delayline import build_model, propagate_batch
from tdltdc.encoder import build_encoder
from tdltdc.runconfig import RunConfig


def _backends():
    out = [("python", _py)]
    try:
        from tdltdc._kernels import _core
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    else:
        out.insert(0, ("compiled", _core))
    return out


def _time(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=2_000_000)
    args = parser.parse_args()
    n = args.events

    config = RunConfig()
    model = build_model(4, 14000, 3000, 2000, seed=1, clock=config.clock)
    thresholds = np.array(model.thresholds, dtype=np.int64)
    rng = np.random.default_rng(12345)
    phases = rng.integers(0, config.clock.start_period, size=n, dtype=np.int64)

    words = propagate_batch(model, phases)
    catalog = estimate_widths(
        build_catalog_from_words(words, model.n_taps, config.clock.start_period)
    )
    cfg = choose_for_target(
        sweep(catalog.widths().tolist(), catalog.covered_range, 2000, 100_000, 200),
        21650,
    )
    encoder = build_encoder(catalog, cfg)
    table_words = encoder._table_words
    table_groups = encoder._table_groups
    groups = _kernels.lookup_groups(words, table_words, table_groups)
    bins = groups.astype(np.int64) % cfg.n_groups
    counts16 = np.zeros(cfg.n_groups, dtype=np.uint16)

    half = config.clock.half_period
    print(f"model: {model.n_taps} taps, {len(catalog)} states, "
          f"N={cfg.n_groups} groups, {n:,} events")
    print(f"active import backend: {_kernels.BACKEND}")
    print()
    header = f"{'kernel':<14}" + "".join(
        f"{name:>14}" for name, _ in _backends()
    )
    print(header)

    rows = {
        "pack_states": lambda mod: _time(
            mod.pack_states, thresholds, phases, half, model.n_taps
        ),
        "seq_values": lambda mod: _time(
            (mod if hasattr(mod, "seq_values") else _py).seq_values,
            words, model.n_taps,
        ),
        "lookup_groups": lambda mod: _time(
            mod.lookup_groups, words, table_words, table_groups
        ),
        "fill_bins": lambda mod: _time(
            mod.fill_bins, counts16.copy(), bins
        ),
    }
    reference: dict[str, np.ndarray] = {}
    for label, runner in rows.items():
        cells = []
        for name, mod in _backends():
            secs, result = runner(mod)
            value = result[0] if isinstance(result, tuple) else result
            if label in reference:
                same = np.array_equal(reference[label], value)
                suffix = "" if same else " (MISMATCH)"
            else:
                reference[label] = value
                suffix = ""
            rate = n / secs / 1e6
            cells.append(f"{secs*1e3:8.1f}ms {rate:5.0f}M/s{suffix}")
        print(f"{label:<14}" + "".join(f"{c:>24}" for c in cells))

    print()
    for name, mod in _backends():
        t0 = time.perf_counter()
        w = mod.pack_states(thresholds, phases, half, model.n_taps)
        g = mod.lookup_groups(w, table_words, table_groups)
        c = np.zeros(cfg.n_groups, dtype=np.uint16)
        mod.fill_bins(c, g[g >= 0].astype(np.int64) % cfg.n_groups)
        dt = time.perf_counter() - t0
        print(f"end-to-end {name:<9} {dt*1e3:8.1f}ms "
              f"({n / dt / 1e6:.1f}M events/s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
