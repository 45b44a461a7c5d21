"""Simulator and calibration toolkit for tapped-delay-line time digitizers.

The toolkit models a carry-chain delay line with per-element mismatch,
catalogs the sampler states the line actually produces, groups adjacent
states into near-uniform bins, and characterizes the resulting converter
with code-density and interval-sweep measurements.
"""

__version__ = "0.1.0"

from .timebase import ClockConfig, fs_to_ps, ps_to_fs
from .delayline import (
    DelayElement,
    DelayLineModel,
    RawState,
    build_model,
    load_model,
    propagate,
    propagate_batch,
    save_model,
    state_intervals,
)
from .events import EventSource, sample_events, sample_times_and_phases
from .catalog import (
    StateCatalog,
    StateRecord,
    build_catalog,
    build_catalog_from_words,
    estimate_widths,
    load_catalog,
    save_catalog,
    seq_value,
)
from .binning import (
    BinConfiguration,
    build_configuration,
    choose_for_target,
    first_pass,
    per_group_count_minima,
    predict_linearity,
    rse,
    second_pass,
    sweep,
)
from .encoder import (
    Fine,
    MissingCode,
    StateEncoder,
    build_encoder,
    encode_batch,
    load_encoder,
    save_encoder,
)
from .histogram import (
    FullTimestamp,
    HistogramPair,
    HistogramSnapshot,
    combine_timestamp,
    select_coarse,
    timestamp_to_fs,
)
from .analysis import (
    LinearityReport,
    SweepReport,
    code_density,
    compare_rse,
    residual_envelope,
    time_interval_sweep,
)
from .runconfig import ConfigError, RunConfig, derive_seed, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
