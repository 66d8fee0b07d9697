import numpy as np
import pytest

from cfens.core import DetectionRule, TimeSeries, Window, make_window
from cfens.data import SyntheticSpec, generate_synthetic, split
from cfens.detect import ZScoreDetector
from cfens.sample import fit_forecaster


def random_window(rng, D=1, S=10, context=40, scale=1.0):
    return Window(rng.normal(size=(context, D)) * scale, rng.normal(size=(S, D)) * scale,
                  ("random", context))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def spike_corpus():
    """Small univariate sine series with a few spikes, shared by end-to-end tests."""
    return generate_synthetic(SyntheticSpec(T=1500, count=4, seed=3, clean_fraction=0.5))


@pytest.fixture(scope="session")
def spike_window(spike_corpus):
    event = spike_corpus.events[0]
    return make_window(spike_corpus.series, event.start)


@pytest.fixture(scope="session")
def zscore():
    return ZScoreDetector()


@pytest.fixture(scope="session")
def rule():
    return DetectionRule(0.5)


@pytest.fixture(scope="session")
def spike_forecaster(spike_corpus):
    train, _, _ = split(spike_corpus.series)
    return fit_forecaster(train, 5)


@pytest.fixture
def tiny_series():
    return TimeSeries(np.arange(200, dtype=float).reshape(200, 1), name="ramp")
