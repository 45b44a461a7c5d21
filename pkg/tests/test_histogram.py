import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdltdc.histogram import (
    COUNTER_MAX,
    MAX_BINS,
    FullTimestamp,
    HistogramPair,
    coarse_registers,
    combine_batch,
    combine_timestamp,
    load_snapshot,
    save_snapshot,
    select_coarse,
    timestamp_to_fs,
)


def _engine(n_bins=8, n_fine=4, integration=1000, lsb=100.0, start=0):
    return HistogramPair(n_bins, n_fine, integration, lsb, start_time=start)


# ---------------------------------------------------------------- combiner


def test_register_pair_behaviour():
    n = 100
    # first half and third quarter: both registers hold the true count
    assert coarse_registers(7, 10, n) == (7, 7)
    assert coarse_registers(7, 60, n) == (7, 7)
    # last quarter: the early register has already stepped
    assert coarse_registers(7, 75, n) == (8, 7)
    assert coarse_registers(7, 99, n) == (8, 7)


def test_selection_avoids_the_stepping_register():
    n = 100
    # the early register is read only while it is far from its step
    assert select_coarse(7, 0, n) == 7
    assert select_coarse(7, 49, n) == 7
    # from mid-range on, the nominal register has settled and is used,
    # so the early register stepping at three quarters never leaks out
    assert select_coarse(7, 50, n) == 7
    assert select_coarse(7, 75, n) == 7
    assert select_coarse(7, 99, n) == 7


@given(
    coarse=st.integers(min_value=0, max_value=10**6),
    fine=st.integers(min_value=0, max_value=599),
    n_fine=st.integers(min_value=1, max_value=600),
)
def test_combined_index_is_race_free(coarse, fine, n_fine):
    fine = fine % n_fine
    ts = FullTimestamp(coarse=coarse, fine=fine)
    assert combine_timestamp(ts, n_fine) == coarse * n_fine + fine


def test_combine_batch_matches_scalar():
    rng = np.random.default_rng(5)
    n_fine = 76
    coarse = rng.integers(0, 50, size=500)
    fine = rng.integers(0, n_fine, size=500)
    combined = combine_batch(coarse, fine, n_fine)
    for idx in range(coarse.size):
        ts = FullTimestamp(int(coarse[idx]), int(fine[idx]))
        assert combined[idx] == combine_timestamp(ts, n_fine)


def test_fine_code_out_of_range_rejected():
    with pytest.raises(ValueError):
        combine_timestamp(FullTimestamp(0, 4), 4)
    with pytest.raises(ValueError):
        combine_timestamp(FullTimestamp(0, -1), 4)
    with pytest.raises(ValueError):
        combine_batch(np.array([0]), np.array([4]), 4)


def test_timestamp_to_fs_uses_bin_centers():
    start, covered, n = 1_667_000, 1_667_000, 100
    assert timestamp_to_fs(FullTimestamp(0, 0), start, covered, n) == (
        pytest.approx(0.5 * covered / n)
    )
    # a last-quarter fine code still reconstructs with the true count
    t = timestamp_to_fs(FullTimestamp(3, 80), start, covered, n)
    assert t == pytest.approx(3 * start + 80.5 * covered / n)


# ---------------------------------------------------------------- recording


def test_first_bin_increments():
    eng = _engine()
    assert eng.record(FullTimestamp(0, 0), 10)
    assert eng.active_counts()[0] == 1
    assert eng.accepted == 1 and eng.rejected == 0


def test_counter_saturates_instead_of_wrapping():
    eng = _engine(n_bins=4, n_fine=4)
    bins = np.full(COUNTER_MAX, 1, dtype=np.int64)
    times = np.zeros(COUNTER_MAX, dtype=np.int64)
    assert eng.accumulate(bins, times) == []
    assert eng.active_counts()[1] == COUNTER_MAX
    # one more event in the railed bin is dropped and tallied
    assert not eng.record(FullTimestamp(0, 1), 5)
    assert eng.active_counts()[1] == COUNTER_MAX
    assert eng.saturated_lost == 1
    assert eng.accepted == COUNTER_MAX


def test_out_of_range_bin_rejected_not_truncated():
    eng = _engine(n_bins=8, n_fine=4)
    # coarse 5 puts the combined index at 20, past the last bin
    assert not eng.record(FullTimestamp(5, 0), 10)
    assert eng.rejected == 1
    assert eng.active_counts().sum() == 0


def test_setup_limits():
    with pytest.raises(ValueError):
        _engine(n_bins=MAX_BINS + 1, n_fine=1)
    with pytest.raises(ValueError):
        _engine(n_bins=10, n_fine=4)  # not a whole number of fine ranges
    with pytest.raises(ValueError):
        _engine(n_bins=0, n_fine=1)
    with pytest.raises(ValueError):
        _engine(integration=0)
    # the budget itself is fine
    assert _engine(n_bins=MAX_BINS, n_fine=100).n_bins == MAX_BINS


# ---------------------------------------------------------------- windows


def test_boundary_event_opens_the_next_window():
    eng = _engine(integration=1000)
    assert eng.record(FullTimestamp(0, 0), 999)
    # an event stamped exactly on the boundary cannot enter the old window
    with pytest.raises(ValueError):
        eng.record(FullTimestamp(0, 0), 1000)
    first = eng.swap_and_read(1000)
    assert first.total == 1
    assert eng.record(FullTimestamp(0, 0), 1000)
    assert eng.active_counts()[0] == 1


def test_swap_only_at_the_boundary():
    eng = _engine(integration=1000)
    with pytest.raises(ValueError):
        eng.swap_and_read(999)
    with pytest.raises(ValueError):
        eng.swap_and_read(1001)


def test_event_before_window_start_is_an_error():
    eng = _engine(integration=1000, start=5000)
    with pytest.raises(ValueError):
        eng.record(FullTimestamp(0, 0), 4999)


def test_zero_event_window_reads_all_zero():
    eng = _engine()
    snap = eng.swap_and_read(1000)
    assert snap.window_id == 0
    assert snap.total == 0
    assert np.all(snap.counts == 0)
    assert eng.window_start == 1000 and eng.window_id == 1


def test_consecutive_windows_keep_their_counts():
    eng = _engine(n_bins=4, n_fine=4, integration=1000)
    for _ in range(3):
        eng.record(FullTimestamp(0, 2), 100)
    first = eng.swap_and_read(1000)
    for _ in range(5):
        eng.record(FullTimestamp(0, 1), 1500)
    second = eng.swap_and_read(2000)
    assert first.total == 3 and first.counts[2] == 3
    assert second.total == 5 and second.counts[1] == 5
    assert first.window_id == 0 and second.window_id == 1


def test_accumulate_matches_per_event_recording():
    rng = np.random.default_rng(17)
    n_events, integration = 4000, 1000
    times = rng.integers(0, 12 * integration, size=n_events)
    # force some boundary hits and some out-of-range indices
    times[::97] = (times[::97] // integration) * integration
    times.sort()
    coarse = rng.integers(0, 3, size=n_events)
    fine = rng.integers(0, 4, size=n_events)
    coarse[::53] = 9  # combined index past the measurement range

    batch = _engine(n_bins=8, n_fine=4, integration=integration)
    got = batch.accumulate(combine_batch(coarse, fine, 4), times)

    ref = _engine(n_bins=8, n_fine=4, integration=integration)
    want = []
    for c, f, t in zip(coarse, fine, times):
        while t >= ref.window_end:
            want.append(ref.swap_and_read(ref.window_end))
        ref.record(FullTimestamp(int(c), int(f)), int(t))

    assert len(got) == len(want)
    for a, b in zip(got, want):
        assert a.window_id == b.window_id
        assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(batch.active_counts(), ref.active_counts())
    assert batch.accepted == ref.accepted
    assert batch.rejected == ref.rejected
    assert batch.saturated_lost == ref.saturated_lost


def test_accumulate_requires_sorted_times():
    eng = _engine()
    with pytest.raises(ValueError):
        eng.accumulate(np.array([0, 0]), np.array([5, 3]))


def test_accumulate_emits_skipped_windows():
    eng = _engine(integration=1000)
    snaps = eng.accumulate(np.array([0, 1]), np.array([50, 4500]))
    assert [s.window_id for s in snaps] == [0, 1, 2, 3]
    assert snaps[0].total == 1
    assert all(s.total == 0 for s in snaps[1:])
    assert eng.active_counts()[1] == 1


def test_every_event_is_accounted_for():
    # saturating counters, rejects and window swaps together leave no
    # event unexplained: stored + rejected + lost == offered
    rng = np.random.default_rng(23)
    n_events = 200_000
    eng = _engine(n_bins=8, n_fine=4, integration=5000)
    times = np.sort(rng.integers(0, 2 * 5000, size=n_events))
    bins = rng.integers(-1, 10, size=n_events)  # some out of range
    bins[rng.random(n_events) < 0.7] = 0  # pile one bin past its ceiling
    snaps = eng.accumulate(bins, times)
    stored = sum(s.total for s in snaps) + eng.active_counts().sum()
    assert stored == eng.accepted
    assert eng.accepted + eng.rejected + eng.saturated_lost == n_events
    assert eng.saturated_lost > 0  # the schedule actually railed a bin
    assert eng.rejected > 0
    assert all(s.counts.max() <= COUNTER_MAX for s in snaps)


def test_drain_until_closes_finished_windows():
    eng = _engine(integration=1000)
    eng.record(FullTimestamp(0, 0), 10)
    snaps = eng.drain_until(3500)
    assert [s.window_id for s in snaps] == [0, 1, 2]
    assert eng.window_start == 3000
    assert snaps[0].total == 1


# ---------------------------------------------------------------- files


def test_snapshot_file_round_trip(tmp_path):
    eng = _engine(n_bins=8, n_fine=4, integration=1000, lsb=13663.9)
    for fine in (0, 0, 1, 3):
        eng.record(FullTimestamp(0, fine), 100)
    snap = eng.swap_and_read(1000)
    path = tmp_path / "window.csv"
    save_snapshot(snap, path, extra_header={"range": "short"})
    text = path.read_text()
    assert text.startswith("# range: short\n")
    assert "window_id,integration_time_fs,lsb_fs,n_bins" in text
    back = load_snapshot(path)
    assert back.window_id == snap.window_id
    assert back.integration_time == snap.integration_time
    assert back.lsb_fs == pytest.approx(snap.lsb_fs)
    assert np.array_equal(back.counts, snap.counts)


def test_snapshot_loader_rejects_other_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_snapshot(path)
