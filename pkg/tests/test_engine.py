import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reprosamp.engine import (
    ConfidenceSet,
    FiniteSpace,
    GenerativeModel,
    GridSpace,
    Interval,
    NuclearMapping,
    RngStream,
    borel_interval_from_samples,
    depth_central_region,
    monte_carlo_confidence_set,
    nuisance_plausibility,
    profile_nuclear_value,
    repro_pvalue,
)

from oracles import depth_inside_bruteforce


# ---------------------------------------------------------------- streams


def test_stream_children_are_deterministic():
    root = RngStream(seed=42)
    assert root.child(3, 7) == root.child(3, 7)
    assert root.child(3, 7) != root.child(7, 3)
    a = root.child(5).generator().random(4)
    b = root.child(5).generator().random(4)
    np.testing.assert_array_equal(a, b)


def test_stream_children_do_not_collide_over_paths():
    root = RngStream(seed=1)
    ids = {root.child(i, j).stream_id for i in range(40) for j in range(40)}
    assert len(ids) == 1600


def test_stream_rejects_negative_seed():
    with pytest.raises(ValueError):
        RngStream(seed=-1)


# ---------------------------------------------------------- borel intervals


def test_equal_tail_ranks_match_the_documented_rule():
    # 100 values, alpha=0.9: ranks 6 through 95 (1-based) survive
    v = np.arange(1.0, 101.0)
    iv = borel_interval_from_samples(v, 0.90)
    assert (iv.lo, iv.hi) == (6.0, 95.0)


def test_equal_tail_endpoints_near_normal_quantiles():
    rng = np.random.default_rng(2024)
    iv = borel_interval_from_samples(rng.standard_normal(10_000), 0.95)
    assert iv.lo == pytest.approx(-1.96, abs=0.1)
    assert iv.hi == pytest.approx(1.96, abs=0.1)


@given(
    values=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=400),
    alpha=st.floats(0.01, 0.99),
    mode=st.sampled_from(["equal_tail", "shortest"]),
)
@settings(max_examples=200, deadline=None)
def test_borel_interval_holds_enough_mass(values, alpha, mode):
    v = np.asarray(values)
    iv = borel_interval_from_samples(v, alpha, mode=mode)
    inside = int(np.sum((v >= iv.lo) & (v <= iv.hi)))
    assert inside >= math.ceil(alpha * v.size)


@given(
    alpha1=st.floats(0.05, 0.90),
    gap=st.floats(0.01, 0.09),
)
@settings(max_examples=100, deadline=None)
def test_equal_tail_windows_nest_as_the_level_rises(alpha1, gap):
    rng = np.random.default_rng(7)
    v = rng.standard_normal(500)
    a = borel_interval_from_samples(v, alpha1)
    b = borel_interval_from_samples(v, alpha1 + gap)
    assert b.lo <= a.lo and a.hi <= b.hi


def test_shortest_is_never_wider_than_equal_tail():
    rng = np.random.default_rng(99)
    v = rng.exponential(size=3000)
    et = borel_interval_from_samples(v, 0.95, mode="equal_tail")
    sh = borel_interval_from_samples(v, 0.95, mode="shortest")
    assert sh.hi - sh.lo <= et.hi - et.lo


def test_borel_interval_rejects_bad_input():
    with pytest.raises(ValueError):
        borel_interval_from_samples([], 0.95)
    with pytest.raises(ValueError):
        borel_interval_from_samples([1.0], 1.0)
    with pytest.raises(ValueError):
        borel_interval_from_samples([1.0, 2.0], 0.5, mode="widest")


# ------------------------------------------------------------ depth regions


def test_depth_region_matches_distance_ranking_in_1d():
    pts = np.arange(1.0, 101.0)
    region = depth_central_region(pts, 0.95)
    inside = np.nonzero(region.contains(pts[:, None]))[0]
    expected = depth_inside_bruteforce(pts, 0.95)
    np.testing.assert_array_equal(inside, expected)
    assert pts[inside][0] == 3.0 and pts[inside][-1] == 98.0


def test_depth_region_keeps_the_right_fraction_in_2d():
    rng = np.random.default_rng(5)
    cloud = rng.multivariate_normal([0, 0], [[2.0, 0.7], [0.7, 1.0]], size=5000)
    region = depth_central_region(cloud, 0.95)
    frac = region.contains(cloud).mean()
    assert 0.94 <= frac <= 0.96


def test_depth_region_survives_a_flat_direction():
    rng = np.random.default_rng(3)
    cloud = np.column_stack([rng.standard_normal(200), np.full(200, 2.5)])
    region = depth_central_region(cloud, 0.90)
    assert region.contains(cloud).mean() >= 0.90
    assert bool(region.contains(np.array([0.0, 2.5])))


def test_depth_region_rejects_dimension_mismatch():
    region = depth_central_region(np.random.default_rng(0).standard_normal((50, 2)), 0.9)
    with pytest.raises(ValueError):
        region.depth(np.zeros(3))


# ------------------------------------------------- set search and p-values


def _location_model(step=0.02):
    # one observation y = theta + u with standard normal noise
    return GenerativeModel(
        theta_space=GridSpace(-6.0, 6.0, step=step),
        noise_dim=1,
        sample_noise=lambda rng, count: rng.standard_normal((count, 1)),
        generate=lambda th, u: th + float(u[0]),
    )


_LOCATION_NUCLEAR = NuclearMapping(dim=1, apply=lambda u, th: u[:, 0])


def _location_matcher(theta, y_obs):
    return np.array([y_obs - theta])


def test_search_set_covers_and_sizes_like_the_normal_interval():
    stream = RngStream(seed=10)
    cs = monte_carlo_confidence_set(
        _location_model(),
        _LOCATION_NUCLEAR,
        y_obs=0.3,
        alpha=0.95,
        matcher=_location_matcher,
        n_mc=4000,
        stream=stream,
    )
    assert cs.contains(0.3)
    assert cs.total_width() == pytest.approx(2 * 1.96, abs=0.15)
    assert cs.meta["grid_step"] == pytest.approx(0.02)


def test_search_set_is_monotone_in_alpha_on_one_stream():
    stream = RngStream(seed=11)
    lo = monte_carlo_confidence_set(
        _location_model(), _LOCATION_NUCLEAR, 0.0, 0.80, _location_matcher, 2000, stream=stream
    )
    hi = monte_carlo_confidence_set(
        _location_model(), _LOCATION_NUCLEAR, 0.0, 0.95, _location_matcher, 2000, stream=stream
    )
    pts = np.arange(-3.0, 3.0, 0.05)
    for t in pts:
        if lo.contains(t):
            assert hi.contains(t)


def test_search_set_discrete_space():
    model = GenerativeModel(
        theta_space=FiniteSpace((0.0, 1.0, 5.0)),
        noise_dim=1,
        sample_noise=lambda rng, count: rng.standard_normal((count, 1)),
        generate=lambda th, u: th + float(u[0]),
    )
    cs = monte_carlo_confidence_set(
        model, _LOCATION_NUCLEAR, 0.4, 0.95, _location_matcher, 2000, stream=RngStream(3)
    )
    assert cs.kind == "discrete"
    assert 0.0 in cs.values and 1.0 in cs.values and 5.0 not in cs.values


def test_pvalue_is_large_at_the_data_and_small_far_away():
    model = _location_model()
    near = repro_pvalue(
        model, _LOCATION_NUCLEAR, 0.5, 0.5, _location_matcher, 3000, stream=RngStream(12)
    )
    far = repro_pvalue(
        model, _LOCATION_NUCLEAR, 0.5, 4.5, _location_matcher, 3000, stream=RngStream(12)
    )
    assert near > 0.5
    assert far < 0.01
    assert 0.0 <= far <= near <= 1.0


def test_pvalue_returns_zero_when_theta_cannot_reproduce_the_data():
    model = _location_model()
    p = repro_pvalue(
        model,
        _LOCATION_NUCLEAR,
        0.5,
        0.5,
        lambda th, y: np.array([]),
        1000,
        stream=RngStream(13),
    )
    assert p == 0.0


# ------------------------------------------------------- nuisance profiling


def _two_part_model():
    # y = eta + beta + u; matching noise is unique given (eta, beta)
    return GenerativeModel(
        theta_space=GridSpace(-5.0, 5.0),
        noise_dim=1,
        sample_noise=lambda rng, count: rng.standard_normal((count, 1)),
        generate=lambda th, u: th[0] + th[1] + float(u[0]),
        match_noise=lambda th, y: np.array([[y - th[0] - th[1]]]),
    )


def test_identity_nuisance_scores_central_noise_as_tenable():
    model = _two_part_model()
    central = nuisance_plausibility(
        model, _LOCATION_NUCLEAR, np.array([0.05]), 1.0, 0.5, 0.5, 2000, stream=RngStream(21)
    )
    extreme = nuisance_plausibility(
        model, _LOCATION_NUCLEAR, np.array([3.5]), 1.0, 0.5, 0.5, 2000, stream=RngStream(21)
    )
    assert 0.0 <= central <= extreme <= 1.0
    assert central < 0.2
    assert extreme > 0.9


def test_identity_nuisance_is_roughly_sub_uniform():
    model = _two_part_model()
    rng = np.random.default_rng(8)
    vals = [
        nuisance_plausibility(
            model,
            _LOCATION_NUCLEAR,
            rng.standard_normal(1),
            0.0,
            1.0,
            1.0,
            1000,
            stream=RngStream(22).child(i),
        )
        for i in range(200)
    ]
    vals = np.asarray(vals)
    for a in (0.2, 0.5, 0.8):
        assert (vals <= a).mean() >= a - 0.1


def test_profile_value_is_the_minimum_over_candidates():
    model = _two_part_model()
    u = np.array([0.4])
    candidates = [0.0, 0.5, 1.5]
    prof = profile_nuclear_value(
        model, _LOCATION_NUCLEAR, u, 1.0, 0.5, candidates, 1500, stream=RngStream(30)
    )
    singles = [
        nuisance_plausibility(
            model,
            _LOCATION_NUCLEAR,
            u,
            1.0,
            0.5,
            c,
            1500,
            stream=RngStream(30).child(j),
        )
        for j, c in enumerate(candidates)
    ]
    assert prof == pytest.approx(min(singles))


def test_profiling_requires_match_noise():
    model = _location_model()
    with pytest.raises(ValueError):
        nuisance_plausibility(
            model, _LOCATION_NUCLEAR, np.array([0.0]), 0.0, 0.0, 0.0, 100, stream=RngStream(1)
        )


# ------------------------------------------------------------ set plumbing


def test_interval_closure_flags():
    iv = Interval(0.0, 1.0, closed_lo=True, closed_hi=False)
    assert iv.contains(0.0) and not iv.contains(1.0)
    assert iv.length == 1.0


def test_confidence_set_json_round_trip():
    cs = ConfidenceSet(
        level=0.95,
        kind="real_union",
        intervals=(Interval(0.1, 0.4), Interval(0.6, math.inf, closed_hi=False)),
        meta={"seed": 5, "n_mc": 100, "grid_step": 0.001, "warnings": []},
    )
    back = ConfidenceSet.from_json_dict(cs.to_json_dict())
    assert back.level == cs.level and back.kind == cs.kind
    assert back.intervals == cs.intervals
    assert back.meta == cs.meta


def test_product_set_membership():
    cs = ConfidenceSet(
        level=0.9,
        kind="product",
        components={2: (Interval(0.0, 1.0),), 3: (Interval(2.0, 2.5),)},
    )
    assert cs.contains((2, 0.5))
    assert not cs.contains((3, 1.0))
    assert not cs.contains((4, 0.5))
