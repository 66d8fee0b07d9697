import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfens.core import (DetectionRule, Ensemble, HyperParams, Member, Method, TimeSeries, Window,
                        is_valid, make_window)
from cfens.errors import ConfigError, OutOfBounds


def test_make_window_default_lengths(tiny_series):
    w = make_window(tiny_series, 115, S=10, context_length=115)
    assert w.L == 125
    np.testing.assert_array_equal(w.suspect[:, 0], np.arange(115, 125))
    np.testing.assert_array_equal(w.context[:, 0], np.arange(0, 115))
    assert w.origin == ("ramp", 115)


def test_make_window_empty_context(tiny_series):
    w = make_window(tiny_series, 7, S=3, context_length=0)
    assert w.context.shape == (0, 1)
    np.testing.assert_array_equal(w.suspect[:, 0], [7, 8, 9])


@pytest.mark.parametrize("start,ctx,S", [(5, 10, 10), (195, 10, 10), (-1, 0, 1)])
def test_make_window_out_of_bounds(tiny_series, start, ctx, S):
    with pytest.raises(OutOfBounds):
        make_window(tiny_series, start, S=S, context_length=ctx)


def test_window_is_read_only(tiny_series):
    w = make_window(tiny_series, 20, S=5, context_length=10)
    with pytest.raises(ValueError):
        w.suspect[0, 0] = 1.0


@pytest.mark.parametrize("scores,theta,expected", [
    ([0.1, 0.2], 0.5, True),
    ([0.1, 0.5], 0.5, False),
    ([0.0, 0.0], 0.0, False),
])
def test_is_valid(scores, theta, expected):
    assert is_valid(np.array(scores), DetectionRule(theta)) is expected


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.floats(0, 1))
def test_is_valid_matches_strict_max(scores, theta):
    assert is_valid(np.array(scores), DetectionRule(theta)) == (max(scores) < theta)


def test_rule_rejects_out_of_range_theta():
    with pytest.raises(ValueError):
        DetectionRule(1.5)


def test_ensemble_rank_order():
    s = np.zeros((2, 1))
    Ensemble(Method.ICE, [Member(s, np.zeros(2), 1), Member(s, np.zeros(2), 4)])
    with pytest.raises(ValueError):
        Ensemble(Method.ICE, [Member(s, np.zeros(2), 4), Member(s, np.zeros(2), 4)])


def test_empty_ensemble_is_failure():
    e = Ensemble("dpe")
    assert e.failed and len(e) == 0 and e.method is Method.DPE


def test_method_properties():
    assert Method.SPARSE_DPE.is_sparse and Method.SPARSE_DPE.uses_blur
    assert Method.ICE.is_gradient and not Method.ICE.uses_blur
    assert not Method.FS.is_gradient
    assert [m.label for m in Method] == ["DPE", "ICE", "SparseDPE", "SparseICE", "FS", "Naive"]


def test_default_hyperparameters():
    dpe = HyperParams.defaults("dpe")
    assert (dpe.lambda1, dpe.lambda2, dpe.lambdaT, dpe.sigma_max, dpe.learning_rate) == \
        (0.0, 0.1, 0.01, 3.0, 0.01)
    ice = HyperParams.defaults("ice")
    assert (ice.lambda1, ice.lambda2, ice.lambdaT, ice.learning_rate) == (0.01, 0.01, 0.01, 0.1)
    assert HyperParams.defaults("sparse-dpe").lambda1 > 0
    assert HyperParams.defaults("ice", learning_rate=None).learning_rate == 0.1
    assert HyperParams.defaults("ice", learning_rate=2.0).learning_rate == 2.0


@pytest.mark.parametrize("bad", [dict(learning_rate=0), dict(lambda1=-1), dict(iterations=0),
                                 dict(margin_c=2), dict(lambdaT=float("nan"))])
def test_hyperparams_validation(bad):
    with pytest.raises(ConfigError):
        HyperParams(**bad)


def test_timeseries_validation():
    with pytest.raises(Exception):
        TimeSeries(np.array([[np.nan]]))
    ts = TimeSeries(np.arange(4.0))
    assert ts.values.shape == (4, 1)
    assert ts.slice(1, 3).T == 2


def test_window_values_stack():
    w = Window(np.zeros((3, 2)), np.ones((2, 2)))
    assert w.values.shape == (5, 2) and w.S == 2 and w.L == 5 and w.D == 2
