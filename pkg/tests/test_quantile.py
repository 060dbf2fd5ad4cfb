import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reprosamp.engine import RngStream
from reprosamp.quantile import (
    MadCalibration,
    calibrate_mad,
    estimate_delta,
    quantile_ci,
    robust_location_ci,
    robust_scale_ci,
    span_overlap_flags,
)

from oracles import weighted_median_bruteforce


# ----------------------------------------------------------- quantile sets


@pytest.mark.parametrize(
    "n,zeta,alpha,window",
    [
        (60, 0.5, 0.95, (22, 37)),
        (60, 0.1, 0.95, (2, 10)),
        (5, 0.5, 0.8, (0, 3)),
        (2, 0.5, 0.95, (0, 2)),
    ],
)
def test_count_windows_match_frozen_oracle(n, zeta, alpha, window):
    y = np.linspace(0.0, 1.0, n)
    cs = quantile_ci(y, zeta, alpha)
    assert tuple(cs.meta["count_window"]) == window


def test_interval_is_made_of_order_statistics():
    rng = np.random.default_rng(14)
    y = rng.standard_cauchy(60)
    s = np.sort(y)
    cs = quantile_ci(y, 0.5, 0.95)
    (iv,) = cs.intervals
    # frozen window (22, 37): [y_(22), y_(38)]
    assert iv.lo == s[21]
    assert iv.hi == s[37]
    assert iv.closed_lo and iv.closed_hi


def test_sentinels_when_the_window_hits_the_sample_edge():
    cs = quantile_ci([1.0, 2.0], 0.5, 0.95)
    (iv,) = cs.intervals
    assert iv.lo == -np.inf and iv.hi == np.inf
    assert cs.meta["warnings"]


@given(
    data=st.lists(
        st.floats(-100, 100).map(lambda x: round(x, 1)), min_size=3, max_size=80
    ),
    zeta=st.floats(0.05, 0.95),
    alpha=st.floats(0.5, 0.99),
)
@settings(max_examples=150, deadline=None)
def test_membership_equals_the_count_condition_even_with_ties(data, zeta, alpha):
    y = np.asarray(data)
    cs = quantile_ci(y, zeta, alpha)
    a_lo, a_hi = cs.meta["count_window"]
    probes = np.unique(np.concatenate([y, y - 0.05, y + 0.05]))
    for theta in probes:
        at_or_below = int((y <= theta).sum())
        strictly_below = int((y < theta).sum())
        # window meets [#below, #at-or-below]: the tie-safe acceptance rule
        accepted = strictly_below <= a_hi and at_or_below >= a_lo
        assert cs.contains(theta) == accepted


def test_quantile_coverage_smoke_on_heavy_tails():
    rng = np.random.default_rng(2025)
    zeta, alpha = 0.3, 0.95
    theta0 = np.tan(np.pi * (zeta - 0.5))  # standard Cauchy quantile
    hits = 0
    reps = 400
    for _ in range(reps):
        y = rng.standard_cauchy(60)
        if quantile_ci(y, zeta, alpha).contains(theta0):
            hits += 1
    assert hits / reps >= 0.93


def test_quantile_ci_rejects_bad_args():
    with pytest.raises(ValueError):
        quantile_ci([], 0.5)
    with pytest.raises(ValueError):
        quantile_ci([1.0], 0.0)


# ------------------------------------------------------------ span flags


def test_span_flags_disjoint_and_nested_and_chain():
    disjoint = [[0, 1], [2, 3], [4, 5]]
    assert not span_overlap_flags(disjoint).any()
    nested = [[0, 10], [2, 3]]
    assert span_overlap_flags(nested).all()
    chain = [[0, 2], [1, 3], [2.5, 4]]
    np.testing.assert_array_equal(span_overlap_flags(chain), [True, True, True])
    touch = [[0, 1], [1, 2], [3, 4]]
    np.testing.assert_array_equal(span_overlap_flags(touch), [True, True, False])


def test_span_flags_validate_shape():
    with pytest.raises(ValueError):
        span_overlap_flags([[1, 0]])
    with pytest.raises(ValueError):
        span_overlap_flags([1, 2, 3])


# --------------------------------------------------------- shift estimate


def test_delta_is_zero_without_flags_or_with_all_flags():
    y = [3.0, 1.0, 4.0, 1.5, 9.0]
    assert estimate_delta(y, [False] * 5) == 0.0
    assert estimate_delta(y, [True] * 5) == 0.0


def test_delta_matches_the_bruteforce_weighted_medians():
    y = np.array([1.0, 2.0, 3.0, 10.0])
    flags = np.array([True, False, False, True])
    w = np.where(flags, 1.5, 1.0)
    expected = weighted_median_bruteforce(y, w) - weighted_median_bruteforce(
        y, np.ones_like(y)
    )
    assert estimate_delta(y, flags) == expected


@given(
    data=st.lists(st.floats(-50, 50), min_size=2, max_size=40),
    flagbits=st.lists(st.booleans(), min_size=2, max_size=40),
)
@settings(max_examples=150, deadline=None)
def test_delta_agrees_with_bruteforce_everywhere(data, flagbits):
    n = min(len(data), len(flagbits))
    y = np.asarray(data[:n])
    flags = np.asarray(flagbits[:n])
    w = np.where(flags, 1.5, 1.0)
    expected = weighted_median_bruteforce(y, w) - weighted_median_bruteforce(
        y, np.ones_like(y)
    )
    assert estimate_delta(y, flags) == expected


# --------------------------------------------------------------- location


def test_unflagged_location_interval_is_the_median_quantile_interval():
    rng = np.random.default_rng(77)
    y = rng.standard_normal(41)
    loc = robust_location_ci(y, 0.95)
    med = quantile_ci(y, 0.5, 0.95)
    assert loc.intervals == med.intervals


def test_flagged_location_interval_is_shifted_by_delta():
    rng = np.random.default_rng(78)
    y = np.concatenate([rng.standard_normal(30), rng.standard_normal(10) + 4.0])
    flags = np.zeros(40, dtype=bool)
    flags[30:] = True
    plain = robust_location_ci(y, 0.95)
    shifted = robust_location_ci(y, 0.95, flags=flags)
    d = shifted.meta["delta_hat"]
    assert d == estimate_delta(y, flags)
    (p,) = plain.intervals
    (s,) = shifted.intervals
    assert s.lo == p.lo - d and s.hi == p.hi - d


# ------------------------------------------------------------------ scale


def test_mad_constant_is_near_the_normal_mad():
    cal = calibrate_mad(60, RngStream(404), n_sims=5000)
    # population value for large n is 0.6745
    assert cal.value == pytest.approx(0.6745, abs=0.05)


def test_mad_constant_halves_the_absolute_deviation_law():
    # independent check of the defining property: at the calibrated c,
    # P(|Z_j - median(Z)| <= c) should be 1/2 for a fresh normal draw
    n = 60
    cal = calibrate_mad(n, RngStream(404), n_sims=8000)
    rng = np.random.default_rng(505)
    z = rng.standard_normal((20000, n))
    frac = (np.abs(z[:, 0] - np.median(z, axis=1)) <= cal.value).mean()
    assert frac == pytest.approx(0.5, abs=0.02)


def test_scale_membership_equals_the_count_condition():
    rng = np.random.default_rng(99)
    y = 2.0 * rng.standard_normal(45)
    cs = robust_scale_ci(y, 0.95, stream=RngStream(7), n_sims=3000)
    a_lo, a_hi = cs.meta["count_window"]
    c = cs.meta["mad_constant"]
    d = np.abs(y - np.median(y))
    probes = np.concatenate([np.sort(d) / c, np.linspace(0.01, 6.0, 67)])
    for sigma in probes:
        if sigma <= 0:
            continue
        at_or_below = int((d <= c * sigma).sum())
        strictly_below = int((d < c * sigma).sum())
        accepted = strictly_below <= a_hi and at_or_below >= a_lo
        assert cs.contains(sigma) == accepted, sigma


def test_scale_coverage_smoke():
    sigma0 = 2.5
    stream = RngStream(31337)
    cal = calibrate_mad(40, stream.child(0), n_sims=4000)
    rng = np.random.default_rng(606)
    hits = 0
    reps = 200
    for i in range(reps):
        y = sigma0 * rng.standard_normal(40)
        cs = robust_scale_ci(
            y, 0.95, stream=stream.child(1, i), calibration=cal, n_sims=2000
        )
        hits += cs.contains(sigma0)
    assert hits / reps >= 0.92


def test_scale_rejects_mismatched_calibration():
    cal = MadCalibration(n=10, value=0.6, n_sims=100)
    with pytest.raises(ValueError):
        robust_scale_ci(np.ones(12), stream=RngStream(1), calibration=cal)
