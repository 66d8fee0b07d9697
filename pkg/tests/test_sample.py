import warnings

import numpy as np
import pytest
from scipy.stats import norm

from cfens.core import DetectionRule, TimeSeries, Window, is_valid
from cfens.errors import EmptySampleSet, InsufficientData
from cfens.sample import (SIGMA_FLOOR, Forecaster, SingularDesignWarning, explain_fs,
                          explain_naive, fit_forecaster, median_reference, naive_samples, nll,
                          sample_paths)


@pytest.fixture
def noise_series():
    return TimeSeries(np.random.default_rng(7).normal(size=(4000, 1)))


def test_white_noise_fit(noise_series):
    g = fit_forecaster(noise_series, p=3)
    n = noise_series.T - 3
    assert np.all(np.abs(g.coef) < 3 / np.sqrt(n))
    assert g.sigma[0] == pytest.approx(noise_series.values.std(), rel=0.02)


def test_noiseless_ar1_recovered():
    x = 5.0 * 0.9 ** np.arange(200)
    g = fit_forecaster(TimeSeries(x), p=1)
    assert g.coef[0, 0] == pytest.approx(0.9, abs=1e-6)
    assert g.sigma[0] == SIGMA_FLOOR


def test_constant_series_uses_ridge():
    with pytest.warns(SingularDesignWarning):
        g = fit_forecaster(TimeSeries(np.full(100, 3.0)), p=2)
    assert g.predict_next(np.full((5, 1), 3.0))[0] == pytest.approx(3.0, abs=1e-4)


def test_fit_needs_enough_rows():
    with pytest.raises(InsufficientData):
        fit_forecaster(TimeSeries(np.arange(4.0)), p=5)


def test_zero_noise_paths_collapse_to_forecast():
    g = Forecaster(np.array([[0.9]]), np.zeros(1), np.zeros(1))
    ctx = np.array([[1.0], [2.0]])
    paths = sample_paths(g, ctx, 6, 5, seed=0)
    for p in paths:
        np.testing.assert_allclose(p, g.forecast(ctx, 6), atol=1e-6)
    np.testing.assert_allclose(median_reference(paths), g.forecast(ctx, 6), atol=1e-6)
    assert sample_paths(g, ctx, 6, 0, seed=0).shape == (0, 6, 1)


def test_sample_mean_concentrates(noise_series):
    g = fit_forecaster(noise_series, p=2)
    ctx = noise_series.values[:50]
    N = 4000
    paths = sample_paths(g, ctx, 5, N, seed=11)
    dev = np.abs(paths.mean(axis=0) - g.forecast(ctx, 5))
    # the h-step predictive std is at most about sigma * sqrt(h) for a near-white model
    bound = 4 * g.sigma[0] * np.sqrt(np.arange(1, 6)) / np.sqrt(N)
    assert np.all(dev[:, 0] < bound)


def test_sampling_is_seeded(noise_series):
    g = fit_forecaster(noise_series, p=2)
    ctx = noise_series.values[:50]
    np.testing.assert_array_equal(sample_paths(g, ctx, 4, 3, seed=5),
                                  sample_paths(g, ctx, 4, 3, seed=5))


def test_nll_examples():
    g = Forecaster(np.array([[0.0]]), np.zeros(1), np.ones(1))
    ctx = np.zeros((3, 1))
    assert nll(g, ctx, np.zeros((1, 1))) == pytest.approx(0.5 * np.log(2 * np.pi))
    assert nll(g, ctx, np.ones((1, 1))) == pytest.approx(0.5 * np.log(2 * np.pi) + 0.5)
    assert 0.5 * np.log(2 * np.pi) == pytest.approx(0.91894, abs=1e-5)


def test_nll_matches_density_product():
    g = Forecaster(np.array([[0.6, -0.2]]), np.array([0.1]), np.array([0.7]))
    ctx = np.array([[0.3], [1.0]])
    sus = np.array([[0.5], [-0.4]])
    m1 = 0.1 + 0.6 * 1.0 - 0.2 * 0.3
    m2 = 0.1 + 0.6 * 0.5 - 0.2 * 1.0
    expected = -(norm.logpdf(0.5, m1, 0.7) + norm.logpdf(-0.4, m2, 0.7)) / 2
    assert nll(g, ctx, sus) == pytest.approx(expected, abs=1e-9)


def test_fs_vacuous_and_impossible_rules(spike_window, zscore, spike_forecaster):
    res = explain_fs(zscore, DetectionRule(1.0), spike_forecaster, spike_window, 20, seed=1)
    assert res.rejection_rate == 0 and len(res.ensemble) == 20
    res = explain_fs(zscore, DetectionRule(0.0), spike_forecaster, spike_window, 20, seed=1)
    assert res.rejection_rate == 1 and res.ensemble.failed


def test_fs_on_spike_fixture(spike_window, zscore, rule, spike_forecaster):
    res = explain_fs(zscore, rule, spike_forecaster, spike_window, 100, seed=3)
    assert res.rejection_rate < 0.5
    for m in res.ensemble.members:
        assert is_valid(zscore.score(spike_window.with_suspect(m.suspect)), rule)


def test_naive_endpoints_and_midpoint():
    w = Window(np.array([[1.0], [2.0]]), np.array([[4.0]]))
    out = naive_samples(w, [1.0, 0.0, 0.5])
    assert out[0, 0, 0] == 4.0 and out[1, 0, 0] == 2.0 and out[2, 0, 0] == 3.0


def test_naive_members_valid(spike_window, zscore, rule):
    res = explain_naive(zscore, rule, spike_window, 50, seed=2)
    assert 0 <= res.rejection_rate <= 1
    for m in res.ensemble.members:
        assert is_valid(zscore.score(spike_window.with_suspect(m.suspect)), rule)


def test_median_reference_examples():
    assert median_reference(np.array([[[0.0]], [[1.0]], [[2.0]]]))[0, 0] == 1.0
    one = np.random.default_rng(0).normal(size=(1, 3, 2))
    np.testing.assert_array_equal(median_reference(one), one[0])
    with pytest.raises(EmptySampleSet):
        median_reference(np.zeros((0, 3, 1)))


def test_forecaster_round_trip(tmp_path, noise_series):
    g = fit_forecaster(noise_series, p=2)
    g.save(tmp_path / "g.json")
    back = Forecaster.load(tmp_path / "g.json")
    np.testing.assert_array_equal(back.coef, g.coef)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        np.testing.assert_array_equal(back.sigma, g.sigma)
