"""Core machinery for simulation-based confidence sets.

Everything here treats an estimation problem through its generative form
``y = G(theta, u)``, where the noise ``u`` has a completely known
distribution.  A level-``alpha`` confidence set collects every parameter
value that could have produced the observed data using noise that is not
unusual, and "not unusual" is judged by a nuclear mapping ``T(u, theta)``
landing inside a Borel region that holds probability ``alpha`` under the
noise law.  Because the noise law is known, that region can always be
calibrated by plain Monte Carlo, which is what this module automates.

Coverage is finite-sample: it never leans on asymptotics, only on how the
Borel regions are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "RngStream",
    "GridSpace",
    "FiniteSpace",
    "ProductSpace",
    "GenerativeModel",
    "NuclearMapping",
    "Interval",
    "BorelInterval",
    "DepthRegion",
    "ConfidenceSet",
    "borel_interval_from_samples",
    "depth_central_region",
    "monte_carlo_confidence_set",
    "repro_pvalue",
    "nuisance_plausibility",
    "profile_nuclear_value",
]

_MASK64 = (1 << 64) - 1
_RIDGE = 1e-8


def _splitmix64(x: int) -> int:
    # Finalizer from the splitmix64 generator; bijective on 64-bit ints.
    x &= _MASK64
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """A splittable source of reproducible random generators.

    A stream is identified by a user seed and a derived 64-bit stream id.
    ``child(*indices)`` deterministically maps index paths to new stream
    ids, so simulation code can hand every replication, every grid point,
    and every nested draw its own independent generator without any
    coordination.  Derivation depends only on the index path, never on
    worker count or evaluation order, which is what makes parallel and
    serial runs byte-identical.

    Parameters
    ----------
    seed : int
        Non-negative user-facing seed.
    stream_id : int, optional
        Derived identifier; leave at 0 for a root stream.

    Examples
    --------
    >>> root = RngStream(seed=7)
    >>> a = root.child(0, 3)
    >>> b = root.child(0, 3)
    >>> a == b
    True
    >>> float(a.generator().uniform()) == float(b.generator().uniform())
    True
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not 0 <= self.stream_id <= _MASK64:
            raise ValueError("stream_id out of 64-bit range")

    def child(self, *indices: int) -> "RngStream":
        """Derive a sub-stream from a path of non-negative indices."""
        sid = self.stream_id
        for ix in indices:
            # LCG step folds the index in, splitmix64 decorrelates.
            sid = _splitmix64((sid * 6364136223846793005 + ix + 1442695040888963407) & _MASK64)
        return RngStream(self.seed, sid)

    def generator(self) -> np.random.Generator:
        """Fresh counter-based generator keyed by (seed, stream_id)."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GridSpace:
    """Scalar parameter range searched over an evenly spaced grid.

    ``step=None`` resolves to (hi - lo)/2000.  ``open_ends=True`` drops
    the endpoints themselves, for parameters whose boundary values are
    not in the model (a success probability, say).
    """

    lo: float
    hi: float
    step: float | None = None
    open_ends: bool = False

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")

    @property
    def grid_step(self) -> float:
        return self.step if self.step is not None else (self.hi - self.lo) / 2000.0

    def points(self) -> np.ndarray:
        h = self.grid_step
        n = int(math.floor((self.hi - self.lo) / h + 1e-9))
        pts = self.lo + h * np.arange(n + 1)
        pts = pts[pts <= self.hi + 1e-12 * max(1.0, abs(self.hi))]
        if self.open_ends:
            pts = pts[(pts > self.lo) & (pts < self.hi)]
        return pts


@dataclass(frozen=True)
class FiniteSpace:
    """Explicitly enumerated parameter values."""

    values: tuple

    def __post_init__(self) -> None:
        if len(self.values) == 0:
            raise ValueError("finite space needs at least one value")


@dataclass(frozen=True)
class ProductSpace:
    """Cross of a finite label set with a scalar grid; thetas are (label, x) pairs."""

    labels: FiniteSpace
    inner: GridSpace


@dataclass(frozen=True)
class GenerativeModel:
    """Data-generating mechanism ``y = generate(theta, u)``.

    Parameters
    ----------
    theta_space : GridSpace | FiniteSpace | ProductSpace
        Search space for the parameter.
    noise_dim : int
        Length of one noise vector.
    sample_noise : callable
        ``(rng, count) -> (count, noise_dim)`` array of noise draws.
    generate : callable
        ``(theta, u) -> y`` for a single noise vector ``u``.
    match_noise : callable, optional
        ``(theta, y) -> (k, noise_dim)`` array of noise vectors that
        reproduce ``y`` exactly at ``theta`` (empty when infeasible).
        Required by the nuisance-profiling operations.
    """

    theta_space: Any
    noise_dim: int
    sample_noise: Callable[[np.random.Generator, int], np.ndarray]
    generate: Callable[[Any, np.ndarray], Any]
    match_noise: Callable[[Any, Any], np.ndarray] | None = None


@dataclass(frozen=True)
class NuclearMapping:
    """Noise summary ``T(u, theta)`` whose distribution is known by simulation.

    ``apply`` is batched: it takes a ``(count, noise_dim)`` block of noise
    vectors and one theta, and returns ``(count,)`` values when ``dim == 1``
    or ``(count, dim)`` otherwise.
    """

    dim: int
    apply: Callable[[np.ndarray, Any], np.ndarray]


@dataclass(frozen=True)
class Interval:
    """Real interval with explicit endpoint closure. Endpoints may be infinite."""

    lo: float
    hi: float
    closed_lo: bool = True
    closed_hi: bool = True

    def contains(self, x: float) -> bool:
        above = x >= self.lo if self.closed_lo else x > self.lo
        below = x <= self.hi if self.closed_hi else x < self.hi
        return bool(above and below)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def to_json_dict(self) -> dict:
        return {
            "lo": None if math.isinf(self.lo) else self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "closed_lo": self.closed_lo,
            "closed_hi": self.closed_hi,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Interval":
        lo = -math.inf if d["lo"] is None else float(d["lo"])
        hi = math.inf if d["hi"] is None else float(d["hi"])
        return Interval(lo, hi, bool(d["closed_lo"]), bool(d["closed_hi"]))


@dataclass(frozen=True)
class BorelInterval:
    """Closed interval of nuclear values calibrated to hold probability >= alpha."""

    lo: float
    hi: float
    alpha: float
    mode: str

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        out = (t >= self.lo) & (t <= self.hi)
        return bool(out) if out.ndim == 0 else out


@dataclass(eq=False)
class DepthRegion:
    """Central region of a point cloud cut at a depth threshold.

    Depth is ``1 / (1 + (t - center)' P (t - center))`` with ``P`` the
    ridge-regularized inverse covariance of the cloud; the threshold is
    chosen so at least ``ceil(alpha * n)`` cloud points are inside.
    """

    center: np.ndarray
    precision: np.ndarray
    threshold: float
    alpha: float

    def depth(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if t.shape[1] != self.center.size:
            raise ValueError(
                f"point dimension {t.shape[1]} does not match region dimension {self.center.size}"
            )
        d = t - self.center
        q = np.einsum("ij,jk,ik->i", d, self.precision, d)
        return 1.0 / (1.0 + q)

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim <= 1
        out = self.depth(t) >= self.threshold
        return bool(out[0]) if scalar else out


def borel_interval_from_samples(values, alpha: float, mode: str = "equal_tail") -> BorelInterval:
    """Interval of simulated nuclear values holding empirical mass >= alpha.

    Parameters
    ----------
    values : array_like
        Simulated scalar nuclear values; at least one.
    alpha : float
        Target level in (0, 1).
    mode : {"equal_tail", "shortest"}
        ``equal_tail`` centers the retained ranks; ``shortest`` picks the
        narrowest window of ``ceil(alpha * n)`` consecutive order
        statistics, earliest window on ties.

    Returns
    -------
    BorelInterval
        Closed interval containing at least ``ceil(alpha * n)`` of the
        input values.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    if n == 0:
        raise ValueError("no samples to calibrate an interval from")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be inside (0, 1), got {alpha}")
    m = math.ceil(alpha * n)
    if mode == "equal_tail":
        i = (n - m) // 2
        return BorelInterval(float(v[i]), float(v[i + m - 1]), alpha, mode)
    if mode == "shortest":
        widths = v[m - 1:] - v[: n - m + 1]
        i = int(np.argmin(widths))
        return BorelInterval(float(v[i]), float(v[i + m - 1]), alpha, mode)
    raise ValueError(f"unknown mode {mode!r}")


def depth_central_region(points, alpha: float) -> DepthRegion:
    """Central depth region of a simulated cloud of vector nuclear values.

    The returned region contains at least ``ceil(alpha * n)`` of the cloud
    points.  A ridge of ``1e-8 * trace(cov) / q`` keeps the precision
    matrix finite when the cloud is flat in some direction.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    n, q = p.shape
    if n < 2:
        raise ValueError("need at least two points to shape a depth region")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be inside (0, 1), got {alpha}")
    center = p.mean(axis=0)
    cov = np.cov(p, rowvar=False).reshape(q, q)
    tr = float(np.trace(cov))
    ridge = _RIDGE * tr / q if tr > 0 else _RIDGE
    cov = cov + ridge * np.eye(q)
    precision = np.linalg.inv(cov)
    region = DepthRegion(center=center, precision=precision, threshold=-math.inf, alpha=alpha)
    depths = region.depth(p)
    k = math.ceil((1.0 - alpha) * n)
    threshold = float(np.sort(depths)[k - 1]) if k >= 1 else float(depths.min())
    return DepthRegion(center=center, precision=precision, threshold=threshold, alpha=alpha)


@dataclass(eq=False)
class ConfidenceSet:
    """Confidence set over a scalar grid, a finite label set, or their product.

    ``kind`` is one of ``"real_union"`` (union of closed intervals),
    ``"discrete"`` (tuple of retained labels), or ``"product"``
    (mapping from retained label to a tuple of intervals).
    """

    level: float
    kind: str
    intervals: tuple = ()
    values: tuple = ()
    components: dict | None = None
    meta: dict = field(default_factory=dict)

    def contains(self, theta) -> bool:
        if self.kind == "real_union":
            return any(iv.contains(theta) for iv in self.intervals)
        if self.kind == "discrete":
            return theta in self.values
        if self.kind == "product":
            label, x = theta
            ivs = (self.components or {}).get(label)
            return ivs is not None and any(iv.contains(x) for iv in ivs)
        raise ValueError(f"unknown kind {self.kind!r}")

    def total_width(self) -> float:
        """Sum of interval lengths (real_union), or retained label count."""
        if self.kind == "real_union":
            return float(sum(iv.length for iv in self.intervals))
        if self.kind == "discrete":
            return float(len(self.values))
        if self.kind == "product":
            return float(
                sum(sum(iv.length for iv in ivs) for ivs in (self.components or {}).values())
            )
        raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def is_empty(self) -> bool:
        if self.kind == "real_union":
            return len(self.intervals) == 0
        if self.kind == "discrete":
            return len(self.values) == 0
        return not self.components

    def to_json_dict(self) -> dict:
        out: dict = {"level": self.level, "kind": self.kind}
        if self.kind == "real_union":
            out["intervals"] = [iv.to_json_dict() for iv in self.intervals]
        elif self.kind == "discrete":
            out["values"] = list(self.values)
        else:
            out["components"] = [
                {"label": label, "intervals": [iv.to_json_dict() for iv in ivs]}
                for label, ivs in sorted((self.components or {}).items())
            ]
        out["meta"] = self.meta
        return out

    @staticmethod
    def from_json_dict(d: dict) -> "ConfidenceSet":
        kind = d["kind"]
        if kind == "real_union":
            return ConfidenceSet(
                level=float(d["level"]),
                kind=kind,
                intervals=tuple(Interval.from_json_dict(e) for e in d["intervals"]),
                meta=dict(d.get("meta", {})),
            )
        if kind == "discrete":
            return ConfidenceSet(
                level=float(d["level"]),
                kind=kind,
                values=tuple(d["values"]),
                meta=dict(d.get("meta", {})),
            )
        comps = {
            e["label"]: tuple(Interval.from_json_dict(iv) for iv in e["intervals"])
            for e in d["components"]
        }
        return ConfidenceSet(
            level=float(d["level"]), kind=kind, components=comps, meta=dict(d.get("meta", {}))
        )


def _runs_to_intervals(xs: np.ndarray, step: float) -> tuple:
    """Group retained grid points into closed intervals; gaps split runs."""
    if xs.size == 0:
        return ()
    breaks = np.nonzero(np.diff(xs) > 1.5 * step)[0]
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [xs.size - 1]))
    return tuple(Interval(float(xs[a]), float(xs[b])) for a, b in zip(starts, ends))


def _region_for(tvals: np.ndarray, dim: int, alpha: float, mode: str):
    if dim == 1:
        return borel_interval_from_samples(tvals, alpha, mode=mode)
    return depth_central_region(tvals, alpha)


def _theta_is_included(region, candidates: np.ndarray) -> bool:
    if candidates.size == 0:
        return False
    hits = region.contains(candidates)
    return bool(np.any(hits))


def monte_carlo_confidence_set(
    model: GenerativeModel,
    nuclear: NuclearMapping,
    y_obs,
    alpha: float,
    matcher: Callable[[Any, Any], np.ndarray],
    n_mc: int = 1000,
    *,
    stream: RngStream,
    mode: str = "equal_tail",
) -> ConfidenceSet:
    """Level-``alpha`` confidence set by direct search over the parameter space.

    For each candidate theta the noise law is simulated ``n_mc`` times, the
    nuclear values are summarized by a Borel region (quantile interval when
    scalar, depth region when vector), and theta is retained when some noise
    vector that reproduces ``y_obs`` has its nuclear value inside the region.

    Parameters
    ----------
    model, nuclear : GenerativeModel, NuclearMapping
        The generative mechanism and the noise summary.
    y_obs : array_like
        Observed data.
    alpha : float
        Confidence level in (0, 1).
    matcher : callable
        ``(theta, y_obs) -> (k,) or (k, dim)`` array of nuclear values
        attained by noise vectors that reproduce ``y_obs`` at theta; an
        empty array marks theta as infeasible.
    n_mc : int
        Simulation budget per candidate theta.
    stream : RngStream
        Source of randomness; each theta gets ``stream.child(index)``.
    mode : {"equal_tail", "shortest"}
        Borel interval mode for scalar nuclear mappings.

    Notes
    -----
    On a fixed stream the retained set is monotone in ``alpha``: each
    theta's simulated values are identical across calls, and the Borel
    regions only widen as the level rises.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be inside (0, 1), got {alpha}")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    space = model.theta_space
    warnings: list[str] = []

    def included(idx: int, theta) -> bool:
        cand = np.asarray(matcher(theta, y_obs), dtype=float)
        if cand.size == 0:
            return False
        rng = stream.child(idx).generator()
        u = model.sample_noise(rng, n_mc)
        tvals = np.asarray(nuclear.apply(u, theta), dtype=float)
        region = _region_for(tvals, nuclear.dim, alpha, mode)
        return _theta_is_included(region, cand)

    meta = {
        "seed": stream.seed,
        "n_mc": n_mc,
        "mode": mode,
        "grid_step": None,
        "warnings": warnings,
    }

    if isinstance(space, GridSpace):
        pts = space.points()
        keep = np.fromiter(
            (included(i, float(t)) for i, t in enumerate(pts)), dtype=bool, count=pts.size
        )
        meta["grid_step"] = space.grid_step
        intervals = _runs_to_intervals(pts[keep], space.grid_step)
        if not intervals:
            warnings.append("confidence set is empty at the requested level")
        return ConfidenceSet(level=alpha, kind="real_union", intervals=intervals, meta=meta)

    if isinstance(space, FiniteSpace):
        kept = tuple(
            v for i, v in enumerate(space.values) if included(i, v)
        )
        if not kept:
            warnings.append("confidence set is empty at the requested level")
        return ConfidenceSet(level=alpha, kind="discrete", values=kept, meta=meta)

    if isinstance(space, ProductSpace):
        pts = space.inner.points()
        meta["grid_step"] = space.inner.grid_step
        components: dict = {}
        for j, label in enumerate(space.labels.values):
            keep = np.fromiter(
                (
                    included(j * (pts.size + 1) + i + 1, (label, float(t)))
                    for i, t in enumerate(pts)
                ),
                dtype=bool,
                count=pts.size,
            )
            ivs = _runs_to_intervals(pts[keep], space.inner.grid_step)
            if ivs:
                components[label] = ivs
        if not components:
            warnings.append("confidence set is empty at the requested level")
        return ConfidenceSet(level=alpha, kind="product", components=components, meta=meta)

    raise TypeError(f"unsupported parameter space {type(space).__name__}")


def repro_pvalue(
    model: GenerativeModel,
    nuclear: NuclearMapping,
    y_obs,
    theta0,
    matcher: Callable[[Any, Any], np.ndarray],
    n_mc: int = 1000,
    *,
    stream: RngStream,
    alpha_grid=None,
    mode: str = "equal_tail",
) -> float:
    """P-value for ``H0: theta = theta0`` by inverting the confidence sets.

    The p-value is one minus the smallest level at which theta0 enters the
    set, scanned over ``alpha_grid`` (default: 0.001 to 0.999 by 0.001) on
    a single shared batch of simulated nuclear values.  An infeasible
    theta0 returns 0.
    """
    if alpha_grid is None:
        alpha_grid = np.arange(1, 1000) / 1000.0
    alphas = np.sort(np.asarray(alpha_grid, dtype=float))
    if alphas.size == 0 or alphas[0] <= 0.0 or alphas[-1] >= 1.0:
        raise ValueError("alpha_grid values must lie strictly inside (0, 1)")
    cand = np.asarray(matcher(theta0, y_obs), dtype=float)
    if cand.size == 0:
        return 0.0
    rng = stream.child(0).generator()
    u = model.sample_noise(rng, n_mc)
    tvals = np.asarray(nuclear.apply(u, theta0), dtype=float)
    for a in alphas:
        region = _region_for(tvals, nuclear.dim, float(a), mode)
        if _theta_is_included(region, cand):
            return float(1.0 - a)
    return float(1.0 - alphas[-1])


def _cloud_plausibility(tvals: np.ndarray, observed: np.ndarray, alpha_for_depth: float = 0.5):
    """1 - F(depth(t)) for each observed value, F the cloud's own depth CDF."""
    region = depth_central_region(tvals, alpha_for_depth)
    cloud_depths = region.depth(np.atleast_2d(tvals.reshape(tvals.shape[0], -1)))
    obs_depths = region.depth(np.atleast_2d(observed.reshape(observed.shape[0], -1)))
    n = cloud_depths.size
    # F(s) = fraction of cloud depths <= s, evaluated per observed depth
    fractions = np.searchsorted(np.sort(cloud_depths), obs_depths, side="right") / n
    return 1.0 - fractions


def nuisance_plausibility(
    model: GenerativeModel,
    nuclear: NuclearMapping,
    u: np.ndarray,
    eta,
    beta,
    beta_tilde,
    n_mc: int = 1000,
    *,
    stream: RngStream,
    calibration: str = "depth",
) -> float:
    """Smallest level at which swapping the nuisance to ``beta_tilde`` stays tenable.

    The data ``y = G((eta, beta), u)`` is regenerated, every noise vector
    that reproduces it under ``(eta, beta_tilde)`` is recovered through
    ``model.match_noise``, and the best of their nuclear values is scored
    against the simulated nuclear cloud at ``(eta, beta_tilde)``.

    With ``calibration="depth"`` the score is one minus the depth-CDF of
    the matched value (the generic construction).  With
    ``calibration="level"`` the nuclear values are taken to be already
    calibrated sub-uniform levels and are returned directly; use this when
    the mapping itself is a p-value-like statistic.
    """
    if model.match_noise is None:
        raise ValueError("model.match_noise is required for nuisance profiling")
    theta = (eta, beta)
    theta_tilde = (eta, beta_tilde)
    y = model.generate(theta, np.asarray(u, dtype=float))
    matched = np.asarray(model.match_noise(theta_tilde, y), dtype=float)
    if matched.size == 0:
        return 1.0
    matched = matched.reshape(-1, model.noise_dim)
    observed = np.asarray(nuclear.apply(matched, theta_tilde), dtype=float)
    if calibration == "level":
        return float(np.clip(observed, 0.0, 1.0).min())
    if calibration != "depth":
        raise ValueError(f"unknown calibration {calibration!r}")
    rng = stream.generator()
    sims = model.sample_noise(rng, n_mc)
    tvals = np.asarray(nuclear.apply(sims, theta_tilde), dtype=float)
    vals = _cloud_plausibility(tvals, observed)
    return float(vals.min())


def profile_nuclear_value(
    model: GenerativeModel,
    nuclear: NuclearMapping,
    u: np.ndarray,
    eta,
    beta,
    beta_candidates: Sequence,
    n_mc: int = 1000,
    *,
    stream: RngStream,
    calibration: str = "depth",
) -> float:
    """Profiled statistic: the smallest nuisance plausibility over candidates.

    Values near 0 mean some nuisance choice makes ``eta`` an easy fit; the
    statistic is stochastically no larger than uniform at the true ``eta``,
    so thresholding it at ``alpha`` gives a level-``alpha`` test.
    """
    if len(beta_candidates) == 0:
        raise ValueError("need at least one nuisance candidate")
    best = 1.0
    for j, bt in enumerate(beta_candidates):
        val = nuisance_plausibility(
            model,
            nuclear,
            u,
            eta,
            beta,
            bt,
            n_mc,
            stream=stream.child(j),
            calibration=calibration,
        )
        if val < best:
            best = val
    return best
