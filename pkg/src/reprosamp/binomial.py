"""Confidence sets for a binomial success probability.

For ``y`` successes in ``r`` trials, a parameter value ``theta`` is kept
when ``y`` falls inside the narrowest run of consecutive outcomes that
holds probability at least ``alpha`` under Binomial(r, theta).  Sweeping
``theta`` over a grid and merging the retained points yields a confidence
set with finite-sample coverage at least ``alpha``: the acceptance window
is an event of probability ``alpha`` or more at every ``theta``, the true
one included.  The textbook Wald interval is provided as a baseline.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.stats import binom, norm

from reprosamp.engine import ConfidenceSet, GridSpace, Interval, _runs_to_intervals

__all__ = [
    "shortest_mass_window",
    "shortest_binomial_acceptance",
    "acceptance_bounds",
    "binomial_repro_set",
    "wald_interval",
]


# slack absorbing cumulative-sum rounding in window-mass comparisons
_MASS_TOL = 1e-12


def shortest_mass_window(pmf, alpha: float) -> tuple[int, int]:
    """Narrowest index window [i, j] of a pmf vector with mass >= alpha.

    Ties go to the smallest left endpoint.  Works for any non-negative
    vector summing to ~1, which lets empirical pmfs reuse the same rule.
    Mass comparisons carry a 1e-12 slack so cumulative rounding cannot
    reject a window whose true mass attains alpha exactly.
    """
    lo, hi = _mass_windows(np.asarray(pmf, dtype=float)[None, :], alpha)
    return int(lo[0]), int(hi[0])


def _mass_windows(pmf: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise shortest mass windows for a (g, m) matrix of pmfs."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be inside (0, 1), got {alpha}")
    g, m = pmf.shape
    cum = np.concatenate([np.zeros((g, 1)), np.cumsum(pmf, axis=1)], axis=1)
    lo = np.zeros(g, dtype=int)
    hi = np.zeros(g, dtype=int)
    unresolved = np.ones(g, dtype=bool)
    for w in range(m):
        sums = cum[:, w + 1 :] - cum[:, : m - w]
        ok = sums >= alpha - _MASS_TOL
        hit = ok.any(axis=1) & unresolved
        if hit.any():
            first = np.argmax(ok, axis=1)
            lo[hit] = first[hit]
            hi[hit] = first[hit] + w
            unresolved &= ~hit
        if not unresolved.any():
            break
    if unresolved.any():
        raise ValueError("pmf mass below alpha; is the vector normalized?")
    return lo, hi


def acceptance_bounds(r: int, alpha: float, thetas) -> tuple[np.ndarray, np.ndarray]:
    """Shortest acceptance windows of Binomial(r, theta), vectorized over thetas.

    Returns arrays (a_lo, a_hi) with the window [a_lo[g], a_hi[g]] holding
    probability >= alpha at thetas[g].
    """
    thetas = np.asarray(thetas, dtype=float)
    if r < 1:
        raise ValueError("r must be a positive trial count")
    if np.any((thetas <= 0.0) | (thetas >= 1.0)):
        raise ValueError("theta values must lie strictly inside (0, 1)")
    pmf = binom.pmf(np.arange(r + 1)[None, :], r, thetas[:, None])
    return _mass_windows(pmf, alpha)


def shortest_binomial_acceptance(r: int, theta: float, alpha: float) -> tuple[int, int]:
    """Shortest outcome window holding probability >= alpha under Binomial(r, theta).

    Parameters
    ----------
    r : int
        Number of trials.
    theta : float
        Success probability, strictly inside (0, 1).
    alpha : float
        Target mass in (0, 1).

    Returns
    -------
    (int, int)
        Inclusive window (a_lo, a_hi); ties resolved toward the smaller
        left endpoint.

    Examples
    --------
    >>> shortest_binomial_acceptance(20, 0.5, 0.95)
    (6, 14)
    >>> shortest_binomial_acceptance(1, 0.5, 0.4)
    (0, 0)
    """
    lo, hi = acceptance_bounds(r, alpha, np.asarray([theta]))
    return int(lo[0]), int(hi[0])


@lru_cache(maxsize=32)
def _grid_bounds(r: int, alpha: float, grid_step: float):
    space = GridSpace(0.0, 1.0, step=grid_step, open_ends=True)
    pts = space.points()
    lo, hi = acceptance_bounds(r, alpha, pts)
    return pts, lo, hi


def binomial_repro_set(
    y: int, r: int, alpha: float = 0.95, grid_step: float = 0.0005
) -> ConfidenceSet:
    """Level-``alpha`` confidence set for the success probability.

    The theta grid covers (0, 1) exclusive at ``grid_step`` spacing;
    retained points are merged into closed intervals.  Exact acceptance
    windows make the set deterministic, so no simulation budget or seed
    is involved.
    """
    if not isinstance(y, (int, np.integer)) or not 0 <= y <= r:
        raise ValueError(f"y must be an integer in [0, {r}], got {y!r}")
    pts, lo, hi = _grid_bounds(int(r), float(alpha), float(grid_step))
    keep = (lo <= y) & (y <= hi)
    intervals = _runs_to_intervals(pts[keep], grid_step)
    warnings: list[str] = []
    if not intervals:
        warnings.append("confidence set is empty at the requested level")
    meta = {
        "method": "repro",
        "seed": None,
        "n_mc": None,
        "grid_step": grid_step,
        "warnings": warnings,
    }
    return ConfidenceSet(level=alpha, kind="real_union", intervals=intervals, meta=meta)


def wald_interval(y: int, r: int, alpha: float = 0.95) -> ConfidenceSet:
    """Wald normal-approximation interval, clipped to [0, 1].

    Degenerates to a point at y = 0 or y = r, which is exactly the
    pathology the simulation-based set avoids.
    """
    if not isinstance(y, (int, np.integer)) or not 0 <= y <= r:
        raise ValueError(f"y must be an integer in [0, {r}], got {y!r}")
    phat = y / r
    z = norm.ppf((1.0 + alpha) / 2.0)
    half = z * math.sqrt(phat * (1.0 - phat) / r)
    interval = Interval(max(0.0, phat - half), min(1.0, phat + half))
    meta = {
        "method": "wald",
        "seed": None,
        "n_mc": None,
        "grid_step": None,
        "warnings": [],
    }
    return ConfidenceSet(level=alpha, kind="real_union", intervals=(interval,), meta=meta)
