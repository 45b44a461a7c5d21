import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdltdc.analysis import (
    SweepReport,
    code_density,
    compare_rse,
    residual_envelope,
    time_interval_sweep,
    write_density_csv,
    write_sweep_csv,
)
from tdltdc.binning import build_configuration, rse
from tdltdc.catalog import StateCatalog, build_catalog, estimate_widths
from tdltdc.delayline import build_model, state_intervals
from tdltdc.encoder import build_encoder
from tdltdc.histogram import HistogramSnapshot

from .oracles import dnl_inl


def _ideal_setup(ref=1):
    """A bubble-free single-block line whose state widths are known
    exactly, so sweep behaviour is fully predictable."""
    model = build_model(1, 60000, 0, 0, seed=3)
    pairs = state_intervals(model)
    cat = build_catalog(
        (s for s, _ in pairs), model.clock.start_period
    )
    by_key = {s.key: w for s, w in pairs}
    cat = cat.with_widths(by_key[r.state.key] for r in cat)
    config = build_configuration(
        [r.width for r in cat], cat.covered_range, ref
    )
    return model, cat, config, build_encoder(cat, config)


# ------------------------------------------------------------ code density


def test_flat_histogram_is_perfectly_linear():
    report = code_density([100, 100, 100, 100], lsb_fs=50.0)
    assert np.all(report.dnl == 0)
    assert np.all(report.inl == 0)
    assert report.empty_bin_fraction == 0
    assert report.max_abs_dnl == 0 and report.max_abs_inl == 0
    assert report.n_events == 400


def test_three_to_one_split():
    report = code_density([150, 50], lsb_fs=50.0)
    assert report.dnl == pytest.approx([0.5, -0.5])
    assert report.inl == pytest.approx([0.5, 0.0])


def test_snapshot_windows_are_summed():
    def snap(wid, counts):
        return HistogramSnapshot(
            window_id=wid,
            window_start=0,
            integration_time=1000,
            lsb_fs=50.0,
            counts=np.array(counts, dtype=np.int64),
        )

    report = code_density(
        [snap(0, [10, 20, 30]), snap(1, [5, 10, 15])], lsb_fs=50.0
    )
    assert list(report.counts) == [15, 30, 45]


def test_density_input_validation():
    with pytest.raises(ValueError):
        code_density([10], lsb_fs=1.0)
    with pytest.raises(ValueError):
        code_density([10, 20, 30], lsb_fs=1.0, n_groups=2)
    with pytest.raises(ValueError):
        code_density([10, -1], lsb_fs=1.0)
    with pytest.raises(ValueError):
        code_density([0, 0, 0], lsb_fs=1.0)


def test_saturated_counters_raise_a_warning():
    with pytest.warns(UserWarning, match="saturated"):
        code_density([10, 20], lsb_fs=1.0, saturated_lost=7)


@given(
    counts=st.lists(
        st.integers(min_value=0, max_value=10**6), min_size=2, max_size=40
    ).filter(lambda c: sum(c) > 0)
)
def test_density_matches_exact_arithmetic(counts):
    report = code_density(counts, lsb_fs=1.0)
    dnl, inl = dnl_inl(counts)
    assert report.dnl == pytest.approx([float(d) for d in dnl], abs=1e-12)
    assert report.inl == pytest.approx([float(v) for v in inl], abs=1e-12)
    # closure holds exactly, not approximately
    assert report.inl[-1] == 0.0


def test_measured_spread_matches_the_width_estimator():
    counts = [120, 80, 100, 95]
    report = code_density(counts, lsb_fs=1.0)
    assert report.measured_rse == pytest.approx(rse(counts))


# ------------------------------------------------------------ spread gap


def test_density_spread_agrees_for_width_proportional_counts():
    config = build_configuration([40, 20, 20, 20], 100, ref=15)
    counts = [w * 50 for w in config.group_widths]
    report = code_density(counts, lsb_fs=25.0)
    assert compare_rse(config, report) == pytest.approx(0.0, abs=1e-12)


def test_multi_cycle_histogram_folds_per_cycle():
    config = build_configuration([40, 20, 20, 20], 100, ref=15)
    single = [w * 50 for w in config.group_widths]
    report = code_density(single * 3, lsb_fs=25.0)
    assert compare_rse(config, report) == pytest.approx(0.0, abs=1e-12)


def test_fold_must_be_whole():
    config = build_configuration([40, 20, 20, 20], 100, ref=15)
    report = code_density([10] * 6, lsb_fs=25.0)
    with pytest.raises(ValueError):
        compare_rse(config, report)


def test_zero_predicted_spread_reports_absolute_gap():
    config = build_configuration([25, 25, 25, 25], 100, ref=25)
    assert config.rse == 0
    report = code_density([100, 100, 100, 90], lsb_fs=25.0)
    assert compare_rse(config, report) == pytest.approx(
        rse([100, 100, 100, 90])
    )


# ------------------------------------------------------------ sweeps


def test_sweep_staircase_on_a_known_line():
    model, _, config, enc = _ideal_setup()
    report = time_interval_sweep(
        model, enc, n_units=2, events_per_step=300, seed=11
    )
    assert report.blank_steps == ()
    assert report.order_violations == ()
    # every step lands in exactly one bin when no jitter is applied
    assert set(report.populated_bins) == {1}
    assert set(report.halfmax_bins) == {1}
    span = 2 * model.clock.start_period
    assert report.slope == pytest.approx(report.n_bins / span, rel=0.05)
    worst = max(abs(r) for r in report.residuals)
    assert worst < 1.5  # reading error stays within the bin quantization


def test_sweep_is_deterministic_for_a_seed():
    model, _, _, enc = _ideal_setup()
    a = time_interval_sweep(
        model, enc, n_units=1, events_per_step=100,
        jitter_sigma_fs=20000, seed=7,
    )
    b = time_interval_sweep(
        model, enc, n_units=1, events_per_step=100,
        jitter_sigma_fs=20000, seed=7,
    )
    assert a == b


def test_jitter_spreads_each_step_over_few_bins():
    model, _, config, enc = _ideal_setup()
    sigma = int(round(0.5 * enc.lsb_fs))
    report = time_interval_sweep(
        model, enc, n_units=1, events_per_step=400,
        jitter_sigma_fs=sigma, seed=13,
    )
    narrow = sum(1 for h in report.halfmax_bins if 0 < h <= 2)
    assert narrow / report.n_steps > 0.8


def test_dropped_states_show_up_as_blank_steps(tmp_path):
    model, cat, _, _ = _ideal_setup()
    kept = [r for i, r in enumerate(cat) if i % 7 != 3]
    trunc = StateCatalog(
        records=tuple(kept),
        covered_range=cat.covered_range,
        n_taps=cat.n_taps,
        total_events=sum(r.count for r in kept),
    )
    trunc = estimate_widths(trunc, counts=[r.width for r in kept])
    config = build_configuration(
        [r.width for r in trunc], trunc.covered_range, ref=1
    )
    enc = build_encoder(trunc, config)
    report = time_interval_sweep(
        model, enc, n_units=1, events_per_step=50, seed=5
    )
    assert len(report.blank_steps) >= 4
    for k in report.blank_steps:
        assert report.outputs[k] == -1
        assert math.isnan(report.residuals[k])
    lo, hi = residual_envelope(report)
    assert lo <= hi
    path = tmp_path / "sweep.csv"
    write_sweep_csv(report, path)
    text = path.read_text()
    blanks = ":".join(str(b) for b in report.blank_steps)
    assert f"# blank_steps: {blanks}" in text


def test_sweep_parameter_validation():
    model, _, _, enc = _ideal_setup()
    with pytest.raises(ValueError):
        time_interval_sweep(model, enc, n_units=0)
    with pytest.raises(ValueError):
        time_interval_sweep(model, enc, n_units=1, events_per_step=0)
    with pytest.raises(ValueError):
        time_interval_sweep(model, enc, n_units=1, step_fs=0)
    with pytest.raises(ValueError):
        time_interval_sweep(model, enc, n_units=100)  # exceeds bin budget


def test_envelope_needs_usable_steps():
    report = SweepReport(
        inputs_fs=(0, 100),
        outputs=(-1, -1),
        residuals=(math.nan, math.nan),
        blank_steps=(0, 1),
        order_violations=(),
        slope=0.0,
        intercept=0.0,
        populated_bins=(0, 0),
        halfmax_bins=(0, 0),
        n_bins=4,
        events_per_step=10,
        lsb_fs=1.0,
    )
    with pytest.raises(ValueError):
        residual_envelope(report)


# ------------------------------------------------------------ exports


def test_density_csv_contents(tmp_path):
    report = code_density([150, 50], lsb_fs=25.0)
    path = tmp_path / "density.csv"
    write_density_csv(report, path, extra_header={"range": "short"})
    lines = path.read_text().splitlines()
    assert lines[0] == "# range: short"
    assert "bin,count,dnl,inl" in lines
    header = lines.index("bin,count,dnl,inl")
    rows = [line.split(",") for line in lines[header + 1 :]]
    assert [r[0] for r in rows] == ["0", "1"]
    assert [int(r[1]) for r in rows] == [150, 50]
    assert [float(r[2]) for r in rows] == pytest.approx([0.5, -0.5])
    assert float(rows[1][3]) == pytest.approx(0.0)


def test_sweep_csv_round_numbers(tmp_path):
    model, _, _, enc = _ideal_setup()
    report = time_interval_sweep(
        model, enc, n_units=1, events_per_step=50, seed=2
    )
    path = tmp_path / "sweep.csv"
    write_sweep_csv(report, path)
    lines = path.read_text().splitlines()
    head = "step,input_fs,output_bin,residual_lsb,populated_bins,halfmax_bins"
    assert head in lines
    first = lines[lines.index(head) + 1].split(",")
    assert first[0] == "0" and first[1] == "0"
    assert int(first[2]) == report.outputs[0]
