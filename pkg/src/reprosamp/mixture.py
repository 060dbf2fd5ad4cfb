"""Inference for the number of components in a normal mixture.

The order ``tau`` of a mixture is an integer parameter living next to
continuous nuisances (memberships, centers, scales), which rules out both
derivative-based asymptotics and naive bootstrap counts.  The route here:

1. Fit every order with a hard-assignment EM and pick the best penalized
   fit (``bic_tau_hat``).  The point estimate is biased for small samples,
   which is precisely why it is never reported alone.
2. For a hypothesized ``(tau, membership)``, regenerate artificial samples
   that share the observed per-component means and residual norms exactly
   (``conditional_repro_sample``), so the unknown centers and scales drop
   out of the null distribution.
3. Score the hypothesis by how much of the regenerated order distribution
   is strictly more probable than the order fitted on the data
   (``nuclear_statistic``).  The score is stochastically no larger than
   uniform at the truth, so keeping values <= alpha gives level alpha.
4. Search membership space through data-driven candidates: each simulated
   noise vector is matched to the observations by a penalized regression
   fit, and the distinct fits become the candidate list
   (``candidate_set``).

``tau_confidence_set`` assembles the order set; ``mu_sigma_confidence_sets``
turns the same candidates into per-component center/scale intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from reprosamp.engine import ConfidenceSet, Interval, RngStream
from reprosamp.quantile import calibrate_mad, robust_location_ci, robust_scale_ci

__all__ = [
    "MixtureFit",
    "CandidateEntry",
    "CandidateSet",
    "generate_mixture",
    "component_stats",
    "bic_tau_hat",
    "bic_tau_hat_batch",
    "conditional_repro_sample",
    "nuclear_statistic",
    "candidate_set",
    "tau_confidence_set",
    "mu_sigma_confidence_sets",
]

TAU_MAX = 10
FIT_BUDGET = 5
MAX_ITER = 200
TOL = 1e-8
MIN_SIZE = 2

# Degeneracy guard: fitted group variances are floored at a fraction of the
# sample variance.  Without it a freak near-coincident pair of observations
# wins the order comparison at unbounded gain (its log-scale term diverges);
# a genuine component tighter than 1% of the total spread is
# indistinguishable from a point mass, so the floor costs nothing.
_REL_VAR_FLOOR = 1e-4
_ABS_VAR_FLOOR = 1e-24


# --------------------------------------------------------------- containers


@dataclass(eq=False)
class MixtureFit:
    """One fitted hard-assignment mixture: order, labels, and moments."""

    tau: int
    assign: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    criterion: float


@dataclass(eq=False)
class CandidateEntry:
    """A distinct fitted (order, membership) pair with its discovery count."""

    tau: int
    assign: np.ndarray
    multiplicity: int
    loss: float


@dataclass(eq=False)
class CandidateSet:
    """Deduplicated candidate memberships found by the noise-matching search."""

    entries: tuple
    n_draws: int
    lam: float

    def taus(self) -> tuple:
        return tuple(sorted({e.tau for e in self.entries}))

    def tau_multiplicity(self, tau: int) -> int:
        return sum(e.multiplicity for e in self.entries if e.tau == tau)


# ----------------------------------------------------------- data generation


def generate_mixture(mu, sigma, weights, n: int, stream: RngStream):
    """Draw ``n`` observations from a normal mixture with hard memberships.

    Memberships are redrawn wholesale until every component holds at least
    two observations, so downstream moment computations are always defined.

    Returns
    -------
    (ndarray, ndarray)
        Observations ``y`` and integer labels ``assign``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    w = np.asarray(weights, dtype=float)
    tau = mu.size
    if not (sigma.size == tau and w.size == tau):
        raise ValueError("mu, sigma, weights must share one length")
    if np.any(sigma <= 0):
        raise ValueError("sigma entries must be positive")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if n < MIN_SIZE * tau:
        raise ValueError(f"n={n} cannot hold {tau} components of size {MIN_SIZE}")
    w = w / w.sum()
    rng = stream.generator()
    while True:
        assign = rng.choice(tau, size=n, p=w)
        if np.bincount(assign, minlength=tau).min() >= MIN_SIZE:
            break
    u = rng.standard_normal(n)
    y = mu[assign] + sigma[assign] * u
    return y, assign


def component_stats(y, assign, tau: int | None = None):
    """Per-component means and centered residual norms.

    Returns ``(a, b, counts)`` where ``a[k]`` is the mean of group ``k``
    and ``b[k] = ||y_k - a[k]||``.  Every group must hold at least two
    observations for the norm to carry information.
    """
    y = np.asarray(y, dtype=float).ravel()
    assign = np.asarray(assign)
    if assign.shape != y.shape:
        raise ValueError("labels must align with the observations")
    k = int(assign.max()) + 1 if tau is None else int(tau)
    counts = np.bincount(assign, minlength=k)
    if counts.min() < MIN_SIZE:
        bad = int(np.argmin(counts))
        raise ValueError(f"component {bad} has fewer than {MIN_SIZE} observations")
    sums = np.bincount(assign, weights=y, minlength=k)
    a = sums / counts
    b2 = np.bincount(assign, weights=(y - a[assign]) ** 2, minlength=k)
    return a, np.sqrt(b2), counts


def conditional_repro_sample(y, assign, u_new, tau: int | None = None) -> np.ndarray:
    """Artificial sample sharing the observed per-component mean and norm.

    Within each group the fresh noise is centered and rescaled to unit
    norm, then mapped through the observed sufficient statistics; the
    regenerated group has exactly the same mean and residual norm as the
    data, whatever the unknown center and scale were.
    """
    a, b, _ = component_stats(y, assign, tau)
    u_new = np.asarray(u_new, dtype=float).ravel()
    if u_new.shape != np.shape(y):
        raise ValueError("noise must align with the observations")
    out = _conditional_batch(a, b, np.asarray(assign), u_new[None, :])
    return out[0]


def _conditional_batch(a, b, assign, u: np.ndarray) -> np.ndarray:
    """Vectorized conditional regeneration for (m, n) noise blocks."""
    out = np.empty_like(u)
    for k in range(a.size):
        idx = np.nonzero(assign == k)[0]
        block = u[:, idx]
        centered = block - block.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1, keepdims=True)
        np.maximum(norms, 1e-300, out=norms)
        out[:, idx] = a[k] + b[k] * centered / norms
    return out


# ------------------------------------------------------------ batched fitting


def _kmeanspp_assign(pts: np.ndarray, tau: int, draws: np.ndarray) -> np.ndarray:
    """Initial labels per lane: k-means++ seeding on (lanes, n, d) points.

    ``draws`` supplies one uniform per (lane, round) so the consumed
    randomness never depends on the data.
    """
    lanes, n, d = pts.shape
    lane_ix = np.arange(lanes)
    centers = np.empty((lanes, tau, d))
    first = np.minimum((draws[:, 0] * n).astype(int), n - 1)
    centers[:, 0] = pts[lane_ix, first]
    d2 = ((pts - centers[:, 0][:, None, :]) ** 2).sum(axis=2)
    for j in range(1, tau):
        tot = d2.sum(axis=1)
        r = draws[:, j] * tot
        cum = np.cumsum(d2, axis=1)
        pick = (cum > r[:, None]).argmax(axis=1)
        # collapsed lanes (all points equal): spread over indices instead
        dead = tot <= 0
        if dead.any():
            pick[dead] = np.minimum((draws[dead, j] * n).astype(int), n - 1)
        centers[:, j] = pts[lane_ix, pick]
        d2 = np.minimum(d2, ((pts - centers[:, j][:, None, :]) ** 2).sum(axis=2))
    dist = ((pts[:, :, None, :] - centers[:, None, :, :]) ** 2).sum(axis=3)
    return dist.argmin(axis=2)


def _counts_of(assign: np.ndarray, tau: int) -> np.ndarray:
    lanes = assign.shape[0]
    flat = assign + np.arange(lanes)[:, None] * tau
    return np.bincount(flat.ravel(), minlength=lanes * tau).reshape(lanes, tau)


def _repair_min_sizes(cost: np.ndarray, assign: np.ndarray, tau: int) -> np.ndarray:
    """Move cheapest points into undersized groups until all hold MIN_SIZE.

    ``cost`` is the (lanes, n, tau) assignment cost from the current
    E-step; donors are points whose group can spare one.  Each round fixes
    one point per deficient lane, so at most 2*tau rounds run.
    """
    lanes, n = assign.shape
    for _ in range(2 * tau * MIN_SIZE):
        counts = _counts_of(assign, tau)
        needy = counts < MIN_SIZE
        lane_has = needy.any(axis=1)
        if not lane_has.any():
            break
        rows = np.nonzero(lane_has)[0]
        k_fix = needy[rows].argmax(axis=1)
        sub_assign = assign[rows]
        sub_counts = counts[rows]
        donor = sub_counts[np.arange(rows.size)[:, None], sub_assign] > MIN_SIZE
        move_cost = cost[rows, :, :][np.arange(rows.size)[:, None], np.arange(n)[None, :], k_fix[:, None]]
        move_cost = np.where(donor, move_cost, np.inf)
        pick = move_cost.argmin(axis=1)
        assign[rows, pick] = k_fix
    return assign


def _row_var_floor(y: np.ndarray) -> np.ndarray:
    """Per-row variance floor for the degeneracy guard."""
    rv = y.var(axis=1)
    return np.maximum(_REL_VAR_FLOOR * rv, _ABS_VAR_FLOOR * np.maximum(1.0, (y**2).sum(1)))


def _location_criterion(floor_var: np.ndarray, counts, b2, tau: int, n: int) -> np.ndarray:
    # doubled negative classification log-likelihood with group proportions
    # profiled out; dropping the proportion term makes the criterion
    # unbounded below for continuous data (any tight pair of points splits
    # off at arbitrary gain), so it is kept
    b2 = np.maximum(b2, counts * floor_var[:, None])
    return (
        (counts * np.log(b2)).sum(axis=1)
        - 3.0 * (counts * np.log(counts)).sum(axis=1)
        + 2.0 * n * np.log(n)
        + 2.0 * tau * np.log(n)
    )


def _fit_location_batch(
    y: np.ndarray,
    tau: int,
    stream: RngStream,
    n_restarts: int = FIT_BUDGET,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
):
    """Best hard-EM fit of each row of ``y`` into ``tau`` location groups.

    Returns (criterion (m,), assign (m, n)).  Restarts are folded into the
    lane axis; the best (first on ties) restart survives per row.
    """
    m, n = y.shape
    floor = _row_var_floor(y)
    if tau == 1:
        b2 = (y**2).sum(axis=1) - y.sum(axis=1) ** 2 / n
        crit = _location_criterion(
            floor, np.full((m, 1), n, dtype=float), b2[:, None], 1, n
        )
        return crit, np.zeros((m, n), dtype=np.int64)

    lanes = m * n_restarts
    yl = np.repeat(y, n_restarts, axis=0)
    floor_l = np.repeat(floor, n_restarts)
    draws = stream.generator().random((lanes, tau))
    assign = _kmeanspp_assign(yl[:, :, None], tau, draws)

    ones = np.ones((lanes, 1, n))
    feats = np.concatenate([ones, yl[:, None, :], (yl**2)[:, None, :]], axis=1)
    onehot = np.zeros((lanes, n, tau))
    lane_ix = np.arange(lanes)[:, None]
    col_ix = np.arange(n)[None, :]

    active = np.arange(lanes)
    a_assign = assign
    a_feats = feats
    a_yl = yl
    a_floor = floor_l
    obj_prev = np.full(lanes, np.inf)
    final_assign = assign.copy()

    for _ in range(max_iter):
        la = active.size
        oh = onehot[:la]
        oh[...] = 0.0
        oh[np.arange(la)[:, None], col_ix, a_assign] = 1.0
        stats = a_feats @ oh
        counts = np.maximum(stats[:, 0, :], 1.0)
        mu = stats[:, 1, :] / counts
        b2 = np.maximum(stats[:, 2, :] - counts * mu**2, 0.0)
        var = np.maximum(b2 / counts, a_floor[:, None])
        cost = (a_yl[:, :, None] - mu[:, None, :]) ** 2 / (2.0 * var[:, None, :])
        cost += (0.5 * np.log(var) - np.log(counts / n))[:, None, :]
        new_assign = cost.argmin(axis=2)
        new_assign = _repair_min_sizes(cost, new_assign, tau)
        obj = np.take_along_axis(cost, new_assign[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        same = (new_assign == a_assign).all(axis=1)
        small = np.abs(obj_prev[active] - obj) <= tol * np.maximum(1.0, np.abs(obj))
        done = same | small
        obj_prev[active] = obj
        final_assign[active] = new_assign
        if done.all():
            break
        keep = ~done
        active = active[keep]
        a_assign = new_assign[keep]
        a_feats = a_feats[keep]
        a_yl = a_yl[keep]
        a_floor = a_floor[keep]

    stats = feats @ _onehot_of(final_assign, tau)
    counts_f = np.maximum(stats[:, 0, :], 1.0)
    sums, sums2 = stats[:, 1, :], stats[:, 2, :]
    b2 = np.maximum(sums2 - sums**2 / counts_f, 0.0)
    crit = _location_criterion(floor_l, counts_f, b2, tau, n)
    crit = crit.reshape(m, n_restarts)
    best = crit.argmin(axis=1)
    sel = np.arange(m) * n_restarts + best
    return crit[np.arange(m), best], final_assign[sel]


def _onehot_of(assign: np.ndarray, tau: int) -> np.ndarray:
    lanes, n = assign.shape
    oh = np.zeros((lanes, n, tau))
    oh[np.arange(lanes)[:, None], np.arange(n)[None, :], assign] = 1.0
    return oh


def bic_tau_hat_batch(
    y: np.ndarray,
    tau_max: int = TAU_MAX,
    fit_budget: int = FIT_BUDGET,
    *,
    stream: RngStream,
) -> np.ndarray:
    """Penalized best order per row of ``y``; ties go to the smaller order."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("expected a (samples, n) block")
    m, n = y.shape
    if n <= 2 * tau_max:
        raise ValueError(f"need n > {2 * tau_max} observations for orders up to {tau_max}")
    best_crit = np.full(m, np.inf)
    best_tau = np.ones(m, dtype=np.int64)
    for tau in range(1, tau_max + 1):
        crit, _ = _fit_location_batch(y, tau, stream.child(tau), fit_budget)
        better = crit < best_crit
        best_crit[better] = crit[better]
        best_tau[better] = tau
    return best_tau


def bic_tau_hat(
    y,
    tau_max: int = TAU_MAX,
    fit_budget: int = FIT_BUDGET,
    *,
    stream: RngStream,
) -> MixtureFit:
    """Best penalized hard-EM mixture fit over orders 1..tau_max.

    The criterion is the doubled negative classification log-likelihood
    (group means, scales, and proportions profiled out) plus a
    2*tau*log(n) order penalty; the reported ``sigma`` entries are the
    per-group root mean square residuals.  On overlapping mixtures the
    estimator errs toward smaller orders, which is why downstream
    inference never relies on the point estimate alone.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n <= 2 * tau_max:
        raise ValueError(f"need n > {2 * tau_max} observations for orders up to {tau_max}")
    best: MixtureFit | None = None
    for tau in range(1, tau_max + 1):
        crit, assign = _fit_location_batch(y[None, :], tau, stream.child(tau), fit_budget)
        if best is None or crit[0] < best.criterion:
            a, b, counts = component_stats(y, assign[0], tau)
            best = MixtureFit(
                tau=tau,
                assign=assign[0],
                mu=a,
                sigma=b / np.sqrt(counts),
                criterion=float(crit[0]),
            )
    assert best is not None
    return best


# ------------------------------------------------------------ order statistic


def nuclear_statistic(
    y_obs,
    tau: int,
    assign,
    n_mc: int = 1000,
    tau_max: int = TAU_MAX,
    fit_budget: int = FIT_BUDGET,
    *,
    stream: RngStream,
    _tau_hat_obs: int | None = None,
) -> float:
    """Mass of regenerated order estimates strictly more probable than the data's.

    Small values mean the hypothesized ``(tau, assign)`` regenerates
    samples whose fitted orders look like the data's fitted order; at the
    true hypothesis the value is stochastically no larger than uniform.
    """
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    assign = np.asarray(assign)
    a, b, _ = component_stats(y_obs, assign, tau)
    rng = stream.child(0).generator()
    u = rng.standard_normal((n_mc, y_obs.size))
    sims = _conditional_batch(a, b, assign, u)
    tau_sims = bic_tau_hat_batch(sims, tau_max, fit_budget, stream=stream.child(1))
    if _tau_hat_obs is None:
        _tau_hat_obs = bic_tau_hat(y_obs, tau_max, fit_budget, stream=stream.child(2)).tau
    pmf = np.bincount(tau_sims, minlength=tau_max + 1) / n_mc
    p_obs = pmf[_tau_hat_obs]
    return float(pmf[pmf > p_obs].sum())


# ---------------------------------------------------------- candidate search


def _regression_criterion(ssr: np.ndarray, tau: int, n: int, lam: float) -> np.ndarray:
    return n * np.log((ssr + 1.0) / n) + 2.0 * lam * tau * np.log(n)


def _fit_regression_batch(
    y: np.ndarray,
    x: np.ndarray,
    tau: int,
    stream: RngStream,
    n_restarts: int = FIT_BUDGET,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
):
    """Classification-EM mixture of regressions of y on (1, x).

    Groups are lines y = mu_k + sigma_k * x with their own residual
    scales; the membership cost is the per-line classification
    likelihood (scaled residual plus log-scale and log-share terms), so
    wide sparse groups keep their tails instead of losing them to dense
    neighbors.  Returns (ssr, assign) with ssr the plain grouped
    least-squares value of the final assignment, which is what the
    search criterion consumes.  Fitted slopes play the role of scales,
    so their sign is irrelevant downstream.
    """
    m, n = y.shape
    if tau == 1:
        ssr = _ols_ssr(y, x)
        return ssr, np.zeros((m, n), dtype=np.int64)

    lanes = m * n_restarts
    yl = np.repeat(y, n_restarts, axis=0)
    xl = np.repeat(x, n_restarts, axis=0)
    floor = np.repeat(_row_var_floor(y), n_restarts)
    draws = stream.generator().random((lanes, tau))

    def standardized(v):
        sd = v.std(axis=1, keepdims=True)
        return (v - v.mean(axis=1, keepdims=True)) / np.maximum(sd, 1e-12)

    pts = np.stack([standardized(yl), standardized(xl)], axis=2)
    assign = _kmeanspp_assign(pts, tau, draws)

    feats = np.stack([np.ones_like(yl), xl, yl, xl**2, xl * yl, yl**2], axis=1)
    active = np.arange(lanes)
    a_assign = assign
    a_y, a_x = yl, xl
    a_feats = feats
    a_floor = floor
    obj_prev = np.full(lanes, np.inf)
    final_assign = assign.copy()

    for _ in range(max_iter):
        oh = _onehot_of(a_assign, tau)
        stats = a_feats @ oh
        cnt = np.maximum(stats[:, 0, :], 1.0)
        sx, sy, sxx, sxy, syy = (stats[:, i, :] for i in range(1, 6))
        vx = np.maximum(sxx - sx**2 / cnt, 1e-12)
        slope = (sxy - sx * sy / cnt) / vx
        intercept = (sy - slope * sx) / cnt
        ssr_k = np.maximum(syy - sy**2 / cnt - slope * (sxy - sx * sy / cnt), 0.0)
        eps2 = np.maximum(ssr_k / cnt, a_floor[:, None])
        resid = a_y[:, :, None] - intercept[:, None, :] - slope[:, None, :] * a_x[:, :, None]
        cost = resid**2 / (2.0 * eps2[:, None, :]) + (
            0.5 * np.log(eps2) - np.log(cnt / n)
        )[:, None, :]
        new_assign = cost.argmin(axis=2)
        new_assign = _repair_min_sizes(cost, new_assign, tau)
        obj = np.take_along_axis(cost, new_assign[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        same = (new_assign == a_assign).all(axis=1)
        small = np.abs(obj_prev[active] - obj) <= tol * np.maximum(1.0, np.abs(obj))
        done = same | small
        obj_prev[active] = obj
        final_assign[active] = new_assign
        if done.all():
            break
        keep = ~done
        active = active[keep]
        a_assign = new_assign[keep]
        a_y = a_y[keep]
        a_x = a_x[keep]
        a_feats = a_feats[keep]
        a_floor = a_floor[keep]
    ssr = _grouped_ssr(yl, xl, final_assign, tau)
    ssr = ssr.reshape(m, n_restarts)
    best = ssr.argmin(axis=1)
    sel = np.arange(m) * n_restarts + best
    return ssr[np.arange(m), best], final_assign[sel]


def _ols_ssr(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = y.shape[1]
    sx = x.sum(1)
    sy = y.sum(1)
    vx = np.maximum((x**2).sum(1) - sx**2 / n, 1e-12)
    cxy = (x * y).sum(1) - sx * sy / n
    slope = cxy / vx
    ssr = (y**2).sum(1) - sy**2 / n - slope * cxy
    return np.maximum(ssr, 0.0)


def _grouped_ssr(y: np.ndarray, x: np.ndarray, assign: np.ndarray, tau: int) -> np.ndarray:
    oh = _onehot_of(assign, tau)
    feats = np.stack([np.ones_like(y), x, y, x**2, x * y, y**2], axis=1)
    stats = feats @ oh
    cnt = np.maximum(stats[:, 0, :], 1.0)
    sx, sy, sxx, sxy, syy = (
        stats[:, 1, :],
        stats[:, 2, :],
        stats[:, 3, :],
        stats[:, 4, :],
        stats[:, 5, :],
    )
    vx = np.maximum(sxx - sx**2 / cnt, 1e-12)
    cxy = sxy - sx * sy / cnt
    slope = cxy / vx
    ssr_k = syy - sy**2 / cnt - slope * cxy
    return np.maximum(ssr_k, 0.0).sum(axis=1)


def _canonical(assign: np.ndarray, y: np.ndarray, tau: int) -> np.ndarray:
    """Relabel groups in increasing order of their mean response."""
    means = np.full(tau, np.inf)
    for k in range(tau):
        sel = assign == k
        if sel.any():
            means[k] = y[sel].mean()
    order = np.argsort(means, kind="stable")
    relabel = np.empty(tau, dtype=np.int64)
    relabel[order] = np.arange(tau)
    return relabel[assign]


def candidate_set(
    y,
    n_candidates: int = 200,
    lam: float = 1.0,
    tau_max: int = TAU_MAX,
    fit_budget: int = FIT_BUDGET,
    *,
    stream: RngStream,
) -> CandidateSet:
    """Distinct (order, membership) pairs fitted against simulated noise.

    Each standard normal draw ``u`` is matched to the data by grouped
    regressions of y on (1, u) across orders, scored by a penalized
    log-SSR criterion with order weight ``lam``.  Identical fits are
    merged with multiplicities; group labels are canonicalized by
    increasing group mean so equal partitions collide.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n <= 2 * tau_max:
        raise ValueError(f"need n > {2 * tau_max} observations for orders up to {tau_max}")
    if n_candidates < 1:
        raise ValueError("need a positive candidate budget")
    rng = stream.child(0).generator()
    u = rng.standard_normal((n_candidates, n))
    yb = np.broadcast_to(y, (n_candidates, n)).copy()

    best_crit = np.full(n_candidates, np.inf)
    best_tau = np.ones(n_candidates, dtype=np.int64)
    best_assign = np.zeros((n_candidates, n), dtype=np.int64)
    for tau in range(1, tau_max + 1):
        ssr, assign = _fit_regression_batch(yb, u, tau, stream.child(tau), fit_budget)
        crit = _regression_criterion(ssr, tau, n, lam)
        better = crit < best_crit
        best_crit[better] = crit[better]
        best_tau[better] = tau
        best_assign[better] = assign[better]

    seen: dict = {}
    order: list = []
    for s in range(n_candidates):
        tau = int(best_tau[s])
        canon = _canonical(best_assign[s], y, tau)
        key = (tau, canon.tobytes())
        if key in seen:
            seen[key].multiplicity += 1
        else:
            entry = CandidateEntry(
                tau=tau, assign=canon, multiplicity=1, loss=float(best_crit[s])
            )
            seen[key] = entry
            order.append(entry)
    return CandidateSet(entries=tuple(order), n_draws=n_candidates, lam=lam)


# ------------------------------------------------------------- final sets


def tau_confidence_set(
    y,
    candidates: CandidateSet,
    alpha: float = 0.95,
    n_mc: int = 1000,
    tau_max: int = TAU_MAX,
    fit_budget: int = FIT_BUDGET,
    *,
    stream: RngStream,
) -> ConfidenceSet:
    """Confidence set for the mixture order over the candidate list.

    An order enters as soon as one of its candidate memberships scores at
    most ``alpha``; memberships are tried by multiplicity (discovery order
    on ties), so frequent fits short-circuit the search.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be inside (0, 1), got {alpha}")
    y = np.asarray(y, dtype=float).ravel()
    tau_hat_obs = bic_tau_hat(y, tau_max, fit_budget, stream=stream.child(0)).tau
    indexed = list(enumerate(candidates.entries))
    kept = []
    details: dict = {}
    for tau in sorted({e.tau for e in candidates.entries}):
        group = [(i, e) for i, e in indexed if e.tau == tau]
        group.sort(key=lambda pair: (-pair[1].multiplicity, pair[0]))
        best_seen = np.inf
        for idx, e in group:
            stat = nuclear_statistic(
                y,
                tau,
                e.assign,
                n_mc,
                tau_max,
                fit_budget,
                stream=stream.child(1, idx),
                _tau_hat_obs=tau_hat_obs,
            )
            best_seen = min(best_seen, stat)
            if stat <= alpha:
                break
        details[tau] = best_seen
        if best_seen <= alpha:
            kept.append(tau)
    warnings: list[str] = []
    if not kept:
        warnings.append("confidence set is empty at the requested level")
    meta = {
        "method": "mixture_order",
        "seed": stream.seed,
        "n_mc": n_mc,
        "grid_step": None,
        "tau_hat": tau_hat_obs,
        "statistics": {int(t): float(v) for t, v in details.items()},
        "warnings": warnings,
    }
    return ConfidenceSet(level=alpha, kind="discrete", values=tuple(kept), meta=meta)


def component_overlap_flags(y, assign, tau: int | None = None) -> np.ndarray:
    """Mark observations lying inside the span of a foreign component.

    ``flags[i]`` is True when ``y[i]`` falls within the [min, max] range
    of at least one component other than its own.  Such points could
    plausibly have been assigned elsewhere, which is exactly the
    contamination the shifted sign test corrects for.
    """
    y = np.asarray(y, dtype=float).ravel()
    assign = np.asarray(assign)
    if assign.shape != y.shape:
        raise ValueError("assign must have one label per observation")
    tau = int(assign.max()) + 1 if tau is None else tau
    flags = np.zeros(y.size, dtype=bool)
    for k in range(tau):
        members = assign == k
        if not members.any():
            continue
        inside = (y >= y[members].min()) & (y <= y[members].max())
        flags |= inside & ~members
    return flags


def mu_sigma_confidence_sets(
    y,
    candidates: CandidateSet,
    alpha: float = 0.95,
    n_sims: int = 5000,
    *,
    stream: RngStream,
):
    """Per-component center and scale intervals, hulled over memberships.

    For every candidate order the group-wise shifted-sign-test intervals
    (centers) and calibrated absolute-deviation intervals (scales) are
    widened over all candidate memberships of that order.  Returns the
    pair ``(centers, scales)`` as product-form sets keyed by order.
    """
    y = np.asarray(y, dtype=float).ravel()
    cal_cache: dict = {}
    window_streams = stream.child(0)
    warnings: list[str] = []

    def hull(intervals):
        if not intervals:
            return Interval(-np.inf, np.inf, closed_lo=False, closed_hi=False)
        lo = min(iv.lo for iv in intervals)
        hi = max(iv.hi for iv in intervals)
        return Interval(
            lo,
            hi,
            closed_lo=any(iv.closed_lo for iv in intervals if iv.lo == lo),
            closed_hi=any(iv.closed_hi for iv in intervals if iv.hi == hi),
        )

    mu_parts: dict = {}
    sigma_parts: dict = {}
    for e in candidates.entries:
        flags = component_overlap_flags(y, e.assign, e.tau)
        mu_ivs = []
        sigma_ivs = []
        for k in range(e.tau):
            members = e.assign == k
            yk = y[members]
            nk = yk.size
            (mu_iv,) = robust_location_ci(yk, alpha, flags=flags[members]).intervals
            if not (np.isfinite(mu_iv.lo) or np.isfinite(mu_iv.hi)):
                # the count window spans the whole group: nothing to learn
                warnings.append(
                    f"skipped component {k} of a tau={e.tau} membership: "
                    f"{nk} members are too few at level {alpha}"
                )
                mu_ivs.append(None)
                sigma_ivs.append(None)
                continue
            if nk not in cal_cache:
                cal_cache[nk] = calibrate_mad(nk, window_streams.child(nk), n_sims)
            (sg_iv,) = robust_scale_ci(
                yk,
                alpha,
                stream=window_streams.child(nk),
                calibration=cal_cache[nk],
                n_sims=n_sims,
            ).intervals
            mu_ivs.append(mu_iv)
            sigma_ivs.append(sg_iv)
        mu_parts.setdefault(e.tau, []).append(mu_ivs)
        sigma_parts.setdefault(e.tau, []).append(sigma_ivs)

    def assemble(parts):
        comps = {}
        for tau, rows in sorted(parts.items()):
            comps[tau] = tuple(
                hull([row[k] for row in rows if row[k] is not None]) for k in range(tau)
            )
        meta = {
            "method": "mixture_moments",
            "seed": stream.seed,
            "n_mc": n_sims,
            "grid_step": None,
            "warnings": sorted(set(warnings)),
        }
        return ConfidenceSet(level=alpha, kind="product", components=comps, meta=meta)

    return assemble(mu_parts), assemble(sigma_parts)
