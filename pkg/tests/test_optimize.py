import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfens.core import DetectionRule, HyperParams, Method, Window, is_valid
from cfens.errors import NonFiniteLoss
from cfens.optimize import explain, project_box, selected_variables, subsample_grid


@pytest.mark.parametrize("x,expected", [(1.3, 1.0), (-0.2, 0.0), (0.5, 0.5)])
def test_project_box(x, expected):
    assert project_box(x) == expected


def test_subsample_small_cases():
    assert subsample_grid(list("abcde"), 2) == ["a", "e"]
    assert subsample_grid([1, 2, 3], 100) == [1, 2, 3]


def test_subsample_250_to_100():
    picked = subsample_grid(list(range(250)), 100)
    assert len(picked) == 100
    assert picked[0] == 0 and picked[-1] == 249
    assert set(np.diff(picked)) <= {2, 3}
    # independent oracle: nearest grid index, halves rounded up
    expected = [int(np.floor(i * 249 / 99 + 0.5)) for i in range(100)]
    assert picked == expected


@given(st.integers(1, 400), st.integers(1, 120))
def test_subsample_properties(K, N):
    picked = subsample_grid(list(range(K)), N)
    assert len(picked) == min(K, N)
    assert picked == sorted(set(picked))
    assert picked[0] == 0
    if N > 1 or K == 1:
        assert picked[-1] == K - 1


def test_already_normal_window_valid_at_first_iteration(zscore, rule, rng):
    w = Window(rng.normal(size=(50, 1)), rng.normal(size=(10, 1)) * 0.1)
    ens, trace = explain(zscore, rule, w, "ice", HyperParams(iterations=5))
    assert ens.members[0].rank == 1 and trace.valid[0]


@pytest.mark.parametrize("method", ["ice", "dpe", "sparse-ice", "sparse-dpe"])
def test_spike_fixture_members_are_valid(method, spike_window, zscore, rule):
    hp = HyperParams.defaults(method, iterations=300)
    ens, trace = explain(zscore, rule, spike_window, method, hp)
    assert not ens.failed
    assert len(ens) <= hp.max_ensemble
    assert len(trace.losses) == 300
    for m in ens.members:
        assert is_valid(zscore.score(spike_window.with_suspect(m.suspect)), rule)
        assert trace.valid[m.rank - 1]


def test_ice_without_penalties(spike_window, zscore, rule):
    hp = HyperParams(lambda1=0, lambda2=0, lambdaT=0, iterations=500)
    ens, _ = explain(zscore, rule, spike_window, "ice", hp)
    assert not ens.failed


@pytest.mark.parametrize("method", ["ice", "dpe"])
def test_huge_learning_rate_never_yields_invalid_members(method, spike_window, zscore, rule):
    hp = HyperParams.defaults(method, learning_rate=1e6, iterations=50)
    try:
        ens, _ = explain(zscore, rule, spike_window, method, hp)
    except NonFiniteLoss as exc:
        assert exc.trace is not None
        return
    for m in ens.members:
        assert is_valid(zscore.score(spike_window.with_suspect(m.suspect)), rule)


def test_box_variables_stay_in_range(spike_window, zscore, rule):
    hp = HyperParams.defaults("sparse-dpe", iterations=200, learning_rate=5.0)
    ens, trace = explain(zscore, rule, spike_window, "sparse-dpe", hp)
    for var in selected_variables(trace, ens):
        for key in ("w", "t", "M"):
            assert var[key].min() >= 0 and var[key].max() <= 1


def test_explain_rejects_sampling_methods(spike_window, zscore, rule):
    with pytest.raises(ValueError):
        explain(zscore, rule, spike_window, Method.FS, HyperParams())


def test_unreachable_threshold_gives_empty_ensemble(spike_window, zscore):
    ens, trace = explain(zscore, DetectionRule(0.0), spike_window, "ice",
                         HyperParams(iterations=20))
    assert ens.failed and not any(trace.valid)
