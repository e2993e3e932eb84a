import pytest
from hypothesis import given, strategies as st

from arlane.config import load_config
from arlane.evaluation import ConstantAgent, EvalConfig, validate
from arlane.experiments import OrderingCheck, full_ordering, one_marker_dropped, ordering_checks, smoke_threshold


@pytest.mark.parametrize("diff,se,expected", [(-0.1, 0.05, True), (-0.04, 0.05, False), (0.1, 0.05, False)])
def test_strict_ordering_needs_gap_beyond_se(diff, se, expected):
    assert OrderingCheck("a", "b", "<", diff, se).passed is expected


@pytest.mark.parametrize("diff,se,expected", [(-0.1, 0.05, True), (0.04, 0.05, True), (0.06, 0.05, False)])
def test_weak_ordering_allows_tie_within_se(diff, se, expected):
    assert OrderingCheck("a", "b", "<=", diff, se).passed is expected


@given(st.floats(-1, 1), st.floats(0, 1))
def test_strict_implies_weak(diff, se):
    if OrderingCheck("a", "b", "<", diff, se).passed:
        assert OrderingCheck("a", "b", "<=", diff, se).passed


def test_smoke_threshold_is_fraction_of_max_return():
    cfg = load_config(None)
    assert smoke_threshold(cfg, 0.8) == pytest.approx(0.8 * 0.5 * cfg.env.max_steps)


def test_one_marker_dropped_alternates_sides():
    assert one_marker_dropped(0).dropped_markers != one_marker_dropped(1).dropped_markers
    assert len(one_marker_dropped(0).dropped_markers) == 1


def test_identical_agents_tie():
    agents = {"ddpg": ConstantAgent([0.3, 0.2]), "ar-ddpg": ConstantAgent([0.0, 0.2]),
              "ar-rdpg": ConstantAgent([0.0, 0.2]), "ar-cadpg": ConstantAgent([0.0, 0.2])}
    rep = validate(agents, EvalConfig(n_routes=4, disturbance="none"))
    checks = {(c.lhs, c.rhs): c for c in ordering_checks(rep)}
    assert set(checks) == {("ar-ddpg", "ddpg"), ("ar-rdpg", "ddpg"), ("ar-cadpg", "ar-rdpg")}
    tie = checks[("ar-cadpg", "ar-rdpg")]
    assert tie.mean_diff == 0.0 and tie.passed
    assert "~" in full_ordering(rep)
