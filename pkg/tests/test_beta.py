import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from hubats.beta import (
    BetaClampWarning,
    PreferenceSampleSet,
    affine_anchor,
    beta_from_preference,
    beta_from_sensitivity,
    estimate_betas_from_logs,
    read_preference_log,
    run_beta_recovery_study,
    sample_sets_from_log,
)
from hubats.errors import InvalidAnchorError, InvalidParameterError


def p_lesser(beta, delta):
    # independent forward model: lesser item wins with odds exp(beta * delta)
    return math.exp(beta * delta) / (1.0 + math.exp(beta * delta))


def test_indifference_is_zero():
    assert beta_from_preference(0.5, 1.0) == 0.0


@pytest.mark.parametrize("P, a, beta", [(0.268941, 1.0, 1.0), (0.047426, 0.5, 1.5)])
def test_examples(P, a, beta):
    assert beta_from_preference(P, a) == pytest.approx(beta, abs=1e-5)


@pytest.mark.parametrize("a", [0.0, -1.0, float("nan")])
def test_bad_anchor(a):
    with pytest.raises(InvalidAnchorError):
        beta_from_preference(0.3, a)


def test_negative_estimate_clamps_with_warning():
    with pytest.warns(BetaClampWarning):
        assert beta_from_preference(0.7, 1.0) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert beta_from_preference(0.7, 1.0, warn=False) == 0.0


@given(st.sampled_from([0.01, 1.0, 50.0]), st.floats(0.1, 10.0))
def test_round_trip_before_clipping(beta, gap):
    P = p_lesser(beta, -gap)
    if P < 1e-6:
        assert beta_from_preference(P, 1.0 / gap) == pytest.approx(math.log(1e6 - 1) / gap)
    else:
        assert beta_from_preference(P, 1.0 / gap) == pytest.approx(beta, abs=1e-9)


@given(st.floats(0.01, 5.0), st.floats(0.1, 5.0), st.floats(0.1, 10.0))
def test_scale_covariance(beta, gap, c):
    # stretching utilities by c shrinks the inferred beta by c
    assume(beta * gap < 13.0)  # keep P above the clip
    P = p_lesser(beta, -gap)
    assert beta_from_preference(P, 1.0 / (c * gap)) == pytest.approx(beta / c, rel=1e-7)


def test_affine_anchor():
    s, b = affine_anchor(2.0, 6.0)
    assert s * 2.0 + b == pytest.approx(0.0) and s * 6.0 + b == pytest.approx(1.0)
    with pytest.raises(InvalidAnchorError):
        affine_anchor(3.0, 3.0)


def test_sample_set_checks():
    with pytest.raises(InvalidParameterError):
        PreferenceSampleSet((0, 1), 0, 0)
    with pytest.raises(InvalidParameterError):
        PreferenceSampleSet((0, 1), 5, 4)
    assert PreferenceSampleSet((0, 1), 1, 4).rate == 0.25


def test_max_normalisation_example():
    sets = [PreferenceSampleSet((0, 1), 500, 1000, 0), PreferenceSampleSet((0, 1), 268941, 1000000, 1)]
    est = estimate_betas_from_logs(sets)
    assert [e.scaled for e in est] == pytest.approx([0.0, 1.0])
    assert est[1].raw == pytest.approx(1.0, abs=1e-5)
    assert all(0.0 <= e.scaled <= 1.0 for e in est)
    assert "max-normalised" in est[0].scaling_anchor


def test_known_delta_unit_gap_keeps_raw():
    sets = [PreferenceSampleSet((0, 1), 3, 10, 0), PreferenceSampleSet((0, 1), 1, 10, 1)]
    for e in estimate_betas_from_logs(sets, known_delta=-1.0):
        assert e.scaled == e.raw


def test_known_delta_rescales():
    sets = [PreferenceSampleSet((0, 1), 1, 10, 0)]
    e = estimate_betas_from_logs(sets, known_delta=-4.0)[0]
    assert e.scaled == pytest.approx(e.raw / 4.0)
    with pytest.raises(InvalidAnchorError):
        estimate_betas_from_logs(sets, known_delta=2.0)


def test_mixed_pairs_rejected():
    sets = [PreferenceSampleSet((0, 1), 3, 10, 0), PreferenceSampleSet((0, 2), 1, 10, 1)]
    with pytest.raises(InvalidAnchorError):
        estimate_betas_from_logs(sets)
    with pytest.raises(InvalidAnchorError):
        estimate_betas_from_logs([])


def test_all_random_teachers_scale_to_zero():
    sets = [PreferenceSampleSet((0, 1), 6, 10, 0), PreferenceSampleSet((0, 1), 5, 10, 1)]
    est = estimate_betas_from_logs(sets, warn=False)
    assert [e.scaled for e in est] == [0.0, 0.0]


@pytest.mark.parametrize("s, expected", [(0.70, math.log(0.7 / 0.3) / 9), (0.95, math.log(19) / 9), (0.5, 0.0)])
def test_sensitivity(s, expected):
    assert beta_from_sensitivity(s, 0.0, 9.0) == pytest.approx(expected)


def test_sensitivity_is_the_full_range_preference():
    # a test with that beta ranks u_max over u_min at rate s
    b = beta_from_sensitivity(0.85, 0.0, 9.0)
    assert 1.0 - p_lesser(b, -9.0) == pytest.approx(0.85)


def test_sensitivity_errors():
    with pytest.raises(InvalidParameterError):
        beta_from_sensitivity(1.2, 0, 1)
    with pytest.raises(InvalidParameterError):
        beta_from_sensitivity(0.8, 1, 1)
    with pytest.warns(BetaClampWarning):
        assert math.isfinite(beta_from_sensitivity(1.0, 0, 1))


def test_log_round_trip(tmp_path):
    path = tmp_path / "prefs.csv"
    path.write_text("teacher,item_i,item_j,preferred\n"
                    "0,0,1,1\n0,1,0,1\n0,1,0,1\n1,0,1,0\n1,2,0,1\n1,1,0,1\n")
    rows = read_preference_log(path)
    assert rows[0] == (0, 0, 1, True)
    sets = sample_sets_from_log(rows, 0, 1)
    assert [(s.teacher, s.preferred_lesser, s.total) for s in sets] == [(0, 1, 3), (1, 0, 2)]
    with pytest.raises(InvalidAnchorError):
        sample_sets_from_log(rows, 3, 4)


def test_recovery_study_small_and_converging():
    lo = run_beta_recovery_study([0.01, 1.0], 1000, 100, np.random.default_rng(0))
    hi = run_beta_recovery_study([0.01, 1.0], 100_000, 100, np.random.default_rng(0))
    assert lo <= 0.1
    assert hi < lo
    with pytest.raises(InvalidParameterError):
        run_beta_recovery_study([1.0], 0, 1, np.random.default_rng(0))
