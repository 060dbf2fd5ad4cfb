"""Mixture order inference: fits, conditional regeneration, and the sets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reprosamp import RngStream
from reprosamp.mixture import (
    CandidateSet,
    bic_tau_hat,
    bic_tau_hat_batch,
    candidate_set,
    component_stats,
    conditional_repro_sample,
    generate_mixture,
    mu_sigma_confidence_sets,
    nuclear_statistic,
    tau_confidence_set,
)
from reprosamp.mixture import _fit_location_batch

from oracles import location_fit_bruteforce

# exhaustive-search values frozen from tests/oracles.py
Y_TRI = np.array([0.12, 0.18, 0.15, 0.91, 0.88, 0.95, 0.52, 0.49])
TRI_BEST = {
    1: (-13.5011346106, (0, 0, 0, 0, 0, 0, 0, 0)),
    2: (-19.8258362213, (0, 0, 0, 1, 1, 1, 0, 0)),
    3: (-30.5732848574, (0, 0, 0, 1, 1, 1, 2, 2)),
}
Y_NINE = np.array(
    [
        -9.91646555e-01,
        -8.90591839e-01,
        -4.92206519e-01,
        -4.54670785e-01,
        -2.74137855e-01,
        1.23015336e-03,
        6.01436026e-02,
        2.98745538e-01,
        1.34021525e00,
    ]
)
NINE_BEST = {1: -2.9693679182, 2: -2.0210834709}

THREE_MU = np.array([0.1887, 0.2809, 0.4199])
THREE_SIGMA = np.array([0.0414, 0.0474, 0.0886])
THREE_W = np.array([0.4453, 0.3866, 0.1681])


def well_separated(n=60, seed=11):
    stream = RngStream(seed)
    y, assign = generate_mixture([0.0, 5.0], [0.3, 0.3], [0.5, 0.5], n, stream)
    return y, assign


def unit_scale_pair(n=50, seed=41):
    # the candidate criterion's +1 regularizer assumes data on the unit
    # scale of the motivating application; keep these fixtures there
    stream = RngStream(seed)
    y, assign = generate_mixture(
        [0.12, 0.42], [0.035, 0.045], [0.55, 0.45], n, stream
    )
    return y, assign


# ------------------------------------------------------------- generation


def test_generate_mixture_shapes_and_min_counts():
    y, assign = generate_mixture(THREE_MU, THREE_SIGMA, THREE_W, 190, RngStream(3))
    assert y.shape == (190,)
    assert assign.shape == (190,)
    assert np.bincount(assign, minlength=3).min() >= 2


def test_generate_mixture_is_deterministic():
    y1, a1 = generate_mixture([0, 1], [1, 1], [0.5, 0.5], 30, RngStream(5))
    y2, a2 = generate_mixture([0, 1], [1, 1], [0.5, 0.5], 30, RngStream(5))
    assert np.array_equal(y1, y2)
    assert np.array_equal(a1, a2)


def test_generate_mixture_weight_balance():
    _, assign = generate_mixture([0, 10], [1, 1], [0.8, 0.2], 4000, RngStream(9))
    frac = np.mean(assign == 0)
    assert abs(frac - 0.8) < 0.03


def test_generate_mixture_rejects_bad_inputs():
    with pytest.raises(ValueError):
        generate_mixture([0, 1], [1], [0.5, 0.5], 20, RngStream(1))
    with pytest.raises(ValueError):
        generate_mixture([0, 1], [1, -1], [0.5, 0.5], 20, RngStream(1))
    with pytest.raises(ValueError):
        generate_mixture([0, 1], [1, 1], [0.5, -0.5], 20, RngStream(1))
    with pytest.raises(ValueError):
        generate_mixture([0, 1, 2], [1, 1, 1], [1, 1, 1], 5, RngStream(1))


# -------------------------------------------------------------- statistics


def test_component_stats_hand_example():
    y = np.array([1.0, 3.0, 10.0, 14.0])
    a, b, counts = component_stats(y, np.array([0, 0, 1, 1]))
    assert a == pytest.approx([2.0, 12.0])
    assert b == pytest.approx([np.sqrt(2.0), np.sqrt(8.0)])
    assert counts.tolist() == [2, 2]


def test_component_stats_rejects_undersized_group():
    y = np.array([1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="fewer than 2"):
        component_stats(y, np.array([0, 0, 1]))


def test_conditional_sample_preserves_sufficient_statistics():
    y, assign = well_separated()
    a, b, _ = component_stats(y, assign)
    u = RngStream(21).generator().standard_normal(y.size)
    y_new = conditional_repro_sample(y, assign, u)
    a2, b2, _ = component_stats(y_new, assign)
    np.testing.assert_allclose(a2, a, atol=1e-12)
    np.testing.assert_allclose(b2, b, rtol=1e-12)
    assert not np.allclose(y_new, y)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_conditional_sample_sufficiency_is_exact(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 30))
    tau = int(rng.integers(1, 4))
    while True:
        assign = rng.integers(0, tau, n)
        if np.bincount(assign, minlength=tau).min() >= 2:
            break
    y = rng.normal(0, 3, n)
    u = rng.standard_normal(n)
    y_new = conditional_repro_sample(y, assign, u, tau)
    a, b, _ = component_stats(y, assign, tau)
    a2, b2, _ = component_stats(y_new, assign, tau)
    np.testing.assert_allclose(a2, a, atol=1e-9)
    np.testing.assert_allclose(b2, b, atol=1e-9)


# ----------------------------------------------------------------- fitting


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_location_fit_matches_exhaustive_search(tau):
    crit, assign = _fit_location_batch(
        Y_TRI[None, :], tau, RngStream(100), n_restarts=40
    )
    want_crit, want_assign = TRI_BEST[tau]
    assert crit[0] == pytest.approx(want_crit, abs=1e-8)
    got = tuple(assign[0].tolist())
    relabeled = _relabel_like(got, want_assign)
    assert relabeled == want_assign


def _relabel_like(got, want):
    """Map group labels of `got` onto `want`'s labeling when partitions match."""
    mapping = {}
    out = []
    for g, w in zip(got, want):
        if g not in mapping:
            mapping[g] = w
        out.append(mapping[g])
    return tuple(out)


def test_location_fit_is_bounded_by_exhaustive_search():
    # the tau=2 global optimum on this data isolates the tightest pair of
    # points, which center seeding rarely proposes; the fitted value may
    # sit above the exhaustive one but must never fall below it, and the
    # single-group fit must still win the order comparison
    crit, _ = _fit_location_batch(Y_NINE[None, :], 2, RngStream(200), n_restarts=40)
    assert crit[0] >= NINE_BEST[2] - 1e-8
    assert NINE_BEST[1] < crit[0]


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_location_fit_never_beats_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 11))
    y = rng.normal(0, 1, n)
    crit, assign = _fit_location_batch(y[None, :], 2, RngStream(seed), n_restarts=8)
    best, _ = location_fit_bruteforce(y, 2)
    assert crit[0] >= best - 1e-8
    counts = np.bincount(assign[0], minlength=2)
    assert counts.min() >= 2


def test_bic_tau_hat_recovers_separated_orders():
    y2, _ = well_separated(60, 11)
    fit2 = bic_tau_hat(y2, stream=RngStream(50))
    assert fit2.tau == 2
    assert sorted(fit2.mu) == pytest.approx([0.0, 5.0], abs=0.25)

    y1 = RngStream(13).generator().standard_normal(60)
    fit1 = bic_tau_hat(y1, stream=RngStream(51))
    assert fit1.tau == 1

    y3, _ = generate_mixture([0, 6, 12], [0.4, 0.4, 0.4], [1, 1, 1], 90, RngStream(15))
    assert bic_tau_hat(y3, stream=RngStream(52)).tau == 3


def test_bic_tau_hat_batch_matches_single_call():
    y, _ = well_separated(45, 19)
    batch = bic_tau_hat_batch(y[None, :], stream=RngStream(60))
    single = bic_tau_hat(y, stream=RngStream(60))
    assert batch[0] == single.tau


def test_bic_tau_hat_needs_enough_observations():
    with pytest.raises(ValueError, match="need n >"):
        bic_tau_hat(np.zeros(20), tau_max=10, stream=RngStream(1))


def test_batch_rows_are_independent_of_companions():
    y, _ = well_separated(45, 19)
    noise = RngStream(77).generator().standard_normal((3, 45))
    block = np.vstack([y[None, :], noise[:2]])
    taus = bic_tau_hat_batch(block, stream=RngStream(61))
    assert taus[0] == bic_tau_hat_batch(np.vstack([y[None, :], noise[1:]]), stream=RngStream(61))[0]


# --------------------------------------------------------- order statistic


def test_nuclear_statistic_range_and_truth():
    y, assign = well_separated(60, 23)
    stat = nuclear_statistic(y, 2, assign, n_mc=200, stream=RngStream(70))
    assert 0.0 <= stat < 1.0
    assert stat <= 0.9


def test_nuclear_statistic_rejects_merged_hypothesis():
    y, _ = well_separated(60, 29)
    one_group = np.zeros(60, dtype=int)
    stat = nuclear_statistic(y, 1, one_group, n_mc=200, stream=RngStream(71))
    assert stat > 0.9


def test_nuclear_statistic_is_deterministic():
    y, assign = well_separated(60, 31)
    args = dict(n_mc=150, stream=RngStream(72))
    assert nuclear_statistic(y, 2, assign, **args) == nuclear_statistic(
        y, 2, assign, n_mc=150, stream=RngStream(72)
    )


def test_nuclear_statistic_dominates_uniform_at_truth():
    # small-scale check of the sub-uniformity guarantee
    hits_half = 0
    hits_tail = 0
    reps = 40
    for r in range(reps):
        stream = RngStream(9000 + r)
        y, assign = generate_mixture([0.0, 4.0], [0.4, 0.4], [0.5, 0.5], 50, stream)
        stat = nuclear_statistic(
            y, 2, assign, n_mc=80, tau_max=6, stream=stream.child(1)
        )
        hits_half += stat <= 0.5
        hits_tail += stat <= 0.9
    assert hits_half / reps >= 0.5 - 0.18
    assert hits_tail / reps >= 0.9 - 0.12


# --------------------------------------------------------- candidate search


def test_candidate_set_structure_and_multiplicity():
    y, _ = unit_scale_pair(50, 37)
    cands = candidate_set(y, n_candidates=40, tau_max=5, stream=RngStream(80))
    assert isinstance(cands, CandidateSet)
    assert sum(e.multiplicity for e in cands.entries) == 40
    assert cands.n_draws == 40
    keys = {(e.tau, e.assign.tobytes()) for e in cands.entries}
    assert len(keys) == len(cands.entries)
    for e in cands.entries:
        counts = np.bincount(e.assign, minlength=e.tau)
        assert counts.min() >= 2
        means = [y[e.assign == k].mean() for k in range(e.tau)]
        assert means == sorted(means)


def test_candidate_set_finds_true_order():
    y, _ = unit_scale_pair(50, 41)
    cands = candidate_set(y, n_candidates=40, tau_max=5, stream=RngStream(81))
    assert 2 in cands.taus()
    assert cands.tau_multiplicity(2) >= 20


def test_candidate_set_validates_budget():
    y, _ = unit_scale_pair(50, 43)
    with pytest.raises(ValueError, match="positive candidate budget"):
        candidate_set(y, n_candidates=0, stream=RngStream(1))


# ------------------------------------------------------------- final sets


def test_tau_confidence_set_contains_truth_when_separated():
    y, _ = unit_scale_pair(60, 47)
    cands = candidate_set(y, n_candidates=30, tau_max=5, stream=RngStream(90))
    cset = tau_confidence_set(
        y, cands, alpha=0.95, n_mc=150, tau_max=5, stream=RngStream(91)
    )
    assert cset.kind == "discrete"
    assert cset.contains(2)
    assert cset.meta["tau_hat"] == 2
    assert cset.level == 0.95


def test_tau_confidence_set_early_exit_matches_full_scan():
    # overlapping groups so the candidate list spans several orders
    y, _ = generate_mixture([0.2, 0.33], [0.05, 0.06], [0.5, 0.5], 60, RngStream(53))
    cands = candidate_set(y, n_candidates=20, tau_max=4, stream=RngStream(92))
    cset = tau_confidence_set(
        y, cands, alpha=0.95, n_mc=100, tau_max=4, stream=RngStream(93)
    )
    from reprosamp.mixture import bic_tau_hat as _bt

    tau_hat = _bt(y, 4, stream=RngStream(93).child(0)).tau
    for tau in cands.taus():
        stats = [
            nuclear_statistic(
                y,
                tau,
                e.assign,
                100,
                4,
                stream=RngStream(93).child(1, i),
                _tau_hat_obs=tau_hat,
            )
            for i, e in enumerate(cands.entries)
            if e.tau == tau
        ]
        assert cset.contains(tau) == (min(stats) <= 0.95)


def test_mu_sigma_sets_cover_truth_and_nest_hulls():
    stream = RngStream(57)
    y, _ = generate_mixture([0.15, 0.45], [0.04, 0.05], [0.5, 0.5], 80, stream)
    cands = candidate_set(y, n_candidates=25, tau_max=4, stream=RngStream(94))
    mu_set, sigma_set = mu_sigma_confidence_sets(
        y, cands, alpha=0.95, n_sims=2000, stream=RngStream(95)
    )
    assert mu_set.kind == "product" and sigma_set.kind == "product"
    assert set(mu_set.components) == set(cands.taus())
    assert 2 in mu_set.components
    mu_ivs = mu_set.components[2]
    sg_ivs = sigma_set.components[2]
    assert len(mu_ivs) == 2 and len(sg_ivs) == 2
    assert mu_ivs[0].contains(0.15) and mu_ivs[1].contains(0.45)
    assert sg_ivs[0].contains(0.04) and sg_ivs[1].contains(0.05)
    for tau, ivs in mu_set.components.items():
        assert len(ivs) == tau


def test_mu_sigma_sets_are_deterministic():
    y, _ = unit_scale_pair(50, 59)
    cands = candidate_set(y, n_candidates=15, tau_max=3, stream=RngStream(96))
    a1 = mu_sigma_confidence_sets(y, cands, n_sims=1000, stream=RngStream(97))
    a2 = mu_sigma_confidence_sets(y, cands, n_sims=1000, stream=RngStream(97))
    tau0 = cands.taus()[0]
    assert a1[0].components[tau0][0].lo == a2[0].components[tau0][0].lo
    assert a1[1].components[tau0][0].hi == a2[1].components[tau0][0].hi
