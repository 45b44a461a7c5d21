import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdltdc.delayline import (
    DelayElement,
    DelayLineModel,
    LineTooShortError,
    RawState,
    build_model,
    load_model,
    propagate,
    propagate_batch,
    save_model,
    state_intervals,
    state_to_words,
    words_to_state,
)
from tdltdc.timebase import ClockConfig

from .oracles import enumerate_reachable, sampler_thresholds


def _manual_model(tap_delays, skews, clock=None):
    clock = clock or ClockConfig()
    elements = tuple(
        DelayElement(tap_delay=d, sampler_skew=s)
        for d, s in zip(tap_delays, skews)
    )
    return DelayLineModel(
        elements=elements,
        n_clb=len(elements) // 16,
        rng_seed=0,
        clock=clock,
    )


def test_build_model_is_deterministic(run_config):
    a = build_model(4, 14000, 3000, 2000, seed=1, clock=run_config.clock)
    b = build_model(4, 14000, 3000, 2000, seed=1, clock=run_config.clock)
    assert a.elements == b.elements
    c = build_model(4, 14000, 3000, 2000, seed=2, clock=run_config.clock)
    assert a.elements != c.elements


def test_reference_model_shape(reference_model):
    assert reference_model.n_taps == 64
    assert len(reference_model.elements) == 64
    total = sum(e.tap_delay for e in reference_model.elements)
    assert total == 881_914


def test_too_short_line_reports_deficit():
    with pytest.raises(LineTooShortError) as info:
        build_model(1, 14000, 0, 0, seed=1)
    message = str(info.value)
    assert "833500" in message
    assert "short by" in message


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        DelayElement(tap_delay=-1, sampler_skew=0)


def test_ideal_line_gives_thermometer(ideal_model):
    half = ideal_model.clock.half_period
    for phase in (0, 13_999, 14_000, 100_000, half - 1):
        state = propagate(ideal_model, phase)
        depth = sum(
            1
            for t in sampler_thresholds(
                [e.tap_delay for e in ideal_model.elements],
                [e.sampler_skew for e in ideal_model.elements],
            )
            if t <= phase
        )
        assert state.bits == (1 << depth) - 1
        assert state.is_gap_free()
        assert not state.polarity


def test_skewed_sampler_creates_gap():
    # one sampler fires late by more than a tap, leaving a hole in the
    # otherwise filled prefix
    delays = [14_000] * 64
    skews = [0] * 64
    skews[2] = -15_000
    model = _manual_model(delays, skews)
    state = propagate(model, 42_500)
    assert state.bits & 0b1011 == 0b1011
    assert not state.bits & 0b0100
    assert not state.is_gap_free()


def test_polarity_distinguishes_half_periods(reference_model):
    half = reference_model.clock.half_period
    for phase in range(0, half, 50_021):
        lo = propagate(reference_model, phase)
        hi = propagate(reference_model, phase + half)
        assert lo.bits == hi.bits
        assert lo.polarity != hi.polarity
        assert lo.key != hi.key


def test_propagate_batch_matches_scalar(reference_model):
    rng = np.random.default_rng(5)
    phases = rng.integers(
        0, reference_model.clock.start_period, size=4_000, dtype=np.int64
    )
    words = propagate_batch(reference_model, phases)
    for row, phase in zip(words, phases):
        assert words_to_state(row, reference_model.n_taps) == propagate(
            reference_model, int(phase)
        )


def test_propagate_rejects_out_of_range(reference_model):
    with pytest.raises(ValueError):
        propagate(reference_model, -1)
    with pytest.raises(ValueError):
        propagate(reference_model, reference_model.clock.start_period)


def test_state_intervals_match_exhaustive_enumeration(reference_model):
    expected = enumerate_reachable(
        [e.tap_delay for e in reference_model.elements],
        [e.sampler_skew for e in reference_model.elements],
        reference_model.clock.half_period,
        reference_model.clock.start_period,
    )
    got: dict[tuple[int, bool], int] = {}
    for state, width in state_intervals(reference_model):
        key = (state.bits, state.polarity)
        got[key] = got.get(key, 0) + width
    assert got == expected
    assert sum(got.values()) == reference_model.clock.start_period


def test_interval_midpoints_propagate_to_their_state(reference_model):
    half = reference_model.clock.half_period
    offset = 0
    acc: dict[int, int] = {}
    for state, width in state_intervals(reference_model):
        acc[state.key] = acc.get(state.key, 0)
    # walk the intervals in emitted order and probe one phase inside each
    position = {False: 0, True: half}
    for state, width in state_intervals(reference_model):
        start = position[state.polarity]
        probe = start + width // 2
        assert propagate(reference_model, probe) == state
        position[state.polarity] = start + width


@given(
    bits=st.integers(min_value=0, max_value=(1 << 64) - 1),
    polarity=st.booleans(),
)
def test_raw_state_key_round_trip(bits, polarity):
    state = RawState(bits=bits, n_taps=64, polarity=polarity)
    assert RawState.from_key(state.key, 64) == state


def test_words_round_trip(reference_model):
    state = propagate(reference_model, 123_456)
    words = state_to_words(state)
    assert words_to_state(words, reference_model.n_taps) == state


def test_model_file_round_trip(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    save_model(reference_model, path)
    loaded = load_model(path)
    assert loaded == reference_model


def test_model_file_rejects_bad_index(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    save_model(reference_model, path)
    lines = path.read_text().splitlines()
    swap = [ln for ln in lines if not ln.startswith("#")]
    body = [ln for ln in lines if ln.startswith("#")] + swap[1:]
    path.write_text("\n".join(body) + "\n")
    with pytest.raises(ValueError):
        load_model(path)
