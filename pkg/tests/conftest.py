import numpy as np
import pytest

from tdltdc.catalog import build_catalog_from_words, estimate_widths
from tdltdc.delayline import build_model, propagate_batch
from tdltdc.runconfig import RunConfig, derive_seed

# One line per acceptance criterion, echoed after the run so the verdicts
# are visible regardless of output capturing.
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def run_config():
    return RunConfig()


@pytest.fixture(scope="session")
def reference_model(run_config):
    """The documented 4-CLB model every trend check runs against."""
    return build_model(
        n_clb=4,
        nominal_tap_delay=14000,
        mismatch_sigma=3000,
        skew_sigma=2000,
        seed=1,
        clock=run_config.clock,
    )


@pytest.fixture(scope="session")
def ideal_model(run_config):
    """Zero-mismatch line; every pattern is a clean thermometer."""
    return build_model(
        n_clb=4,
        nominal_tap_delay=14000,
        mismatch_sigma=0,
        skew_sigma=0,
        seed=9,
        clock=run_config.clock,
    )


@pytest.fixture(scope="session")
def small_catalog(reference_model):
    """Catalog from a quick 200k-event exposure; fine for shape tests."""
    rng = np.random.default_rng(derive_seed(1, "conftest-small"))
    phases = rng.integers(
        0, reference_model.clock.start_period, size=200_000, dtype=np.int64
    )
    words = propagate_batch(reference_model, phases)
    return estimate_widths(
        build_catalog_from_words(
            words,
            reference_model.n_taps,
            reference_model.clock.start_period,
        )
    )
