"""Replication studies over the interval constructors.

Each study draws data at a known truth, builds the corresponding
confidence set, and aggregates coverage and width across replications.
Replication ``r`` of scenario ``s`` always uses the stream
``RngStream(seed).child(s, r)``, so reports are bitwise identical no
matter how the work is split across processes.

A replication that raises is recorded as a failed row and the study
continues; more than 1% failures aborts the run, since at that point
the aggregates are no longer trustworthy.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import nbinom

from reprosamp.binomial import binomial_repro_set, wald_interval
from reprosamp.engine import RngStream
from reprosamp.mixture import (
    candidate_set,
    generate_mixture,
    mu_sigma_confidence_sets,
    tau_confidence_set,
)
from reprosamp.quantile import quantile_ci
from reprosamp.uniform import (
    inclusion_check,
    uniform_lrt_ci,
    uniform_mean_repro_ci,
    uniform_mean_test_ci,
    uniform_orderstat_ci,
)

STUDIES = (
    "binomial_table1",
    "uniform_example",
    "lrt_compare",
    "quantile_figB1",
    "mixture_tau",
    "mixture_musigma",
)

# SLC-style three-component truth used by the mixture studies.
MIXTURE_MU = (0.1887, 0.2809, 0.4199)
MIXTURE_SIGMA = (0.0414, 0.0474, 0.0886)
MIXTURE_WEIGHTS = (0.4453, 0.3866, 0.168)

_DEFAULTS: dict[str, dict] = {
    "binomial_table1": {"r": 20, "alpha": 0.95, "theta0": (0.1, 0.4, 0.8), "grid_step": 0.0005},
    "uniform_example": {"n": 3, "alpha": 0.95, "theta0": 0.0},
    "lrt_compare": {"n": (10, 20, 200), "alpha": 0.95, "theta0": 0.0},
    "quantile_figB1": {
        "n": 60,
        "alpha": 0.95,
        "zeta": (0.1, 0.3, 0.5, 0.7, 0.9),
        "distribution": ("cauchy", "negbinomial"),
    },
    "mixture_tau": {
        "mu": MIXTURE_MU,
        "sigma": MIXTURE_SIGMA,
        "weights": MIXTURE_WEIGHTS,
        "n": 190,
        "alpha": 0.95,
        "n_candidates": 100,
        "n_mc": 300,
        "lam": 1.75,
        "tau_max": 10,
    },
    "mixture_musigma": {
        "mu": MIXTURE_MU,
        "sigma": MIXTURE_SIGMA,
        "weights": MIXTURE_WEIGHTS,
        "n": 190,
        "alpha": 0.95,
        "n_candidates": 100,
        "n_sims": 2000,
        "lam": 1.75,
        "tau_max": 10,
    },
}

_DEFAULT_REPS = {
    "binomial_table1": 1000,
    "uniform_example": 1000,
    "lrt_compare": 5000,
    "quantile_figB1": 1000,
    "mixture_tau": 50,
    "mixture_musigma": 50,
}


class StudyError(RuntimeError):
    """Raised when a study cannot produce a trustworthy report."""


@dataclass(frozen=True)
class StudyConfig:
    """A named study plus its replication count, seed, and scenario knobs.

    ``params`` overrides the study defaults key by key; unknown keys are
    rejected up front so config-file typos surface before any compute.
    """

    study: str
    reps: int | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)
    workers: int | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        stray = set(self.params) - set(_DEFAULTS[self.study])
        if stray:
            raise ValueError(f"unknown parameter(s) for {self.study}: {sorted(stray)}")
        if self.reps is not None and self.reps < 1:
            raise ValueError("reps must be at least 1")

    def resolved_reps(self) -> int:
        return self.reps if self.reps is not None else _DEFAULT_REPS[self.study]

    def resolved_params(self) -> dict:
        out = dict(_DEFAULTS[self.study])
        for key, value in self.params.items():
            # a scalar where the default is a tuple means a single scenario
            if isinstance(out[key], tuple):
                value = tuple(value) if isinstance(value, (tuple, list)) else (value,)
            out[key] = value
        return out


def paper_scale(config: StudyConfig) -> StudyConfig:
    """Mixture studies at the full published scale: 200 reps, |V|=200, n_mc=1000.

    Other studies already run at their published replication counts, so
    they pass through unchanged.
    """
    if config.study not in ("mixture_tau", "mixture_musigma"):
        return config
    params = dict(config.params)
    params["n_candidates"] = 200
    if config.study == "mixture_tau":
        params["n_mc"] = 1000
    return StudyConfig(config.study, 200, config.seed, params, config.workers)


@dataclass(frozen=True)
class ScenarioRow:
    scenario: str
    reps: int
    failures: int
    coverage: float
    coverage_se: float
    mean_width: float
    width_se: float
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StudyReport:
    study: str
    seed: int
    reps: int
    params: dict
    rows: tuple
    failures: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "study": self.study,
            "seed": self.seed,
            "reps": self.reps,
            "params": _plain(self.params),
            "rows": [
                {
                    "scenario": r.scenario,
                    "reps": r.reps,
                    "failures": r.failures,
                    "coverage": r.coverage,
                    "coverage_se": r.coverage_se,
                    "mean_width": r.mean_width,
                    "width_se": r.width_se,
                    "extra": _plain(r.extra),
                }
                for r in self.rows
            ],
            "failures": [dict(f) for f in self.failures],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "StudyReport":
        rows = tuple(
            ScenarioRow(
                scenario=r["scenario"],
                reps=r["reps"],
                failures=r["failures"],
                coverage=r["coverage"],
                coverage_se=r["coverage_se"],
                mean_width=r["mean_width"],
                width_se=r["width_se"],
                extra=r["extra"],
            )
            for r in d["rows"]
        )
        return StudyReport(
            study=d["study"],
            seed=d["seed"],
            reps=d["reps"],
            params=d["params"],
            rows=rows,
            failures=tuple(d["failures"]),
        )


def _plain(obj):
    """JSON-ready copy: tuples to lists, numpy scalars to Python ones."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# per-study scenario lists and replication bodies
# ---------------------------------------------------------------------------


def _scenarios(study: str, params: dict) -> list[dict]:
    if study == "binomial_table1":
        return [
            {"label": f"theta0={t}", "r": params["r"], "alpha": params["alpha"],
             "theta0": t, "grid_step": params["grid_step"]}
            for t in params["theta0"]
        ]
    if study == "uniform_example":
        return [{"label": f"n={params['n']}", **params}]
    if study == "lrt_compare":
        return [
            {"label": f"n={n}", "n": n, "alpha": params["alpha"], "theta0": params["theta0"]}
            for n in params["n"]
        ]
    if study == "quantile_figB1":
        return [
            {"label": f"{d},zeta={z}", "n": params["n"], "alpha": params["alpha"],
             "distribution": d, "zeta": z}
            for d in params["distribution"]
            for z in params["zeta"]
        ]
    # both mixture studies run a single scenario at the configured truth
    return [{"label": f"tau0={len(params['mu'])}", **params}]


@lru_cache(maxsize=8)
def _binomial_tables(r: int, alpha: float, grid_step: float):
    """All r+1 repro sets and Wald intervals; data-independent, built once."""
    repro = tuple(binomial_repro_set(y, r, alpha, grid_step) for y in range(r + 1))
    wald = tuple(wald_interval(y, r, alpha) for y in range(r + 1))
    return repro, wald


def _rep_binomial(sc: dict, stream: RngStream) -> dict:
    repro, wald = _binomial_tables(sc["r"], sc["alpha"], sc["grid_step"])
    y = int(stream.generator().binomial(sc["r"], sc["theta0"]))
    t = sc["theta0"]
    return {
        "cover": repro[y].contains(t),
        "width": repro[y].total_width(),
        "wald_cover": wald[y].contains(t),
        "wald_width": wald[y].total_width(),
    }


def _rep_uniform(sc: dict, stream: RngStream) -> dict:
    y = sc["theta0"] + stream.generator().uniform(-1.0, 1.0, sc["n"])
    test = uniform_mean_test_ci(y, sc["alpha"])
    repro = uniform_mean_repro_ci(y, sc["alpha"])
    t = sc["theta0"]
    return {
        "test_cover": test.contains(t),
        "test_width": test.total_width(),
        "repro_cover": repro.contains(t),
        "repro_width": repro.total_width(),
        "inclusion": inclusion_check(repro, test),
    }


def _rep_lrt(sc: dict, stream: RngStream) -> dict:
    y = sc["theta0"] + stream.generator().uniform(-1.0, 1.0, sc["n"])
    orderstat = uniform_orderstat_ci(y, sc["alpha"])
    lrt = uniform_lrt_ci(y, sc["alpha"])
    repro = uniform_mean_repro_ci(y, sc["alpha"])
    test = uniform_mean_test_ci(y, sc["alpha"])
    t = sc["theta0"]
    ow, lw = orderstat.total_width(), lrt.total_width()
    return {
        "orderstat_cover": orderstat.contains(t),
        "orderstat_width": ow,
        "lrt_cover": lrt.contains(t),
        "lrt_width": lw,
        "orderstat_narrower": ow < lw,
        "inclusion": inclusion_check(repro, test),
    }


def true_quantile(distribution: str, zeta: float) -> float:
    """Population zeta-quantile of the study distributions."""
    if distribution == "cauchy":
        return math.tan(math.pi * (zeta - 0.5))
    if distribution == "negbinomial":
        return float(nbinom.ppf(zeta, 2, 0.1))
    raise ValueError(f"unknown distribution {distribution!r}")


def _rep_quantile(sc: dict, stream: RngStream) -> dict:
    g = stream.generator()
    if sc["distribution"] == "cauchy":
        y = g.standard_cauchy(sc["n"])
    else:
        y = g.negative_binomial(2, 0.1, sc["n"]).astype(float)
    cs = quantile_ci(y, sc["zeta"], sc["alpha"])
    t = true_quantile(sc["distribution"], sc["zeta"])
    return {"cover": cs.contains(t), "width": cs.total_width()}


def _rep_mixture_tau(sc: dict, stream: RngStream) -> dict:
    tau0 = len(sc["mu"])
    y, _ = generate_mixture(sc["mu"], sc["sigma"], sc["weights"], sc["n"], stream.child(0))
    cands = candidate_set(
        y, sc["n_candidates"], sc["lam"], sc["tau_max"], stream=stream.child(1)
    )
    cs = tau_confidence_set(
        y, cands, sc["alpha"], sc["n_mc"], sc["tau_max"], stream=stream.child(2)
    )
    return {
        "cover": tau0 in cs.values,
        "width": float(len(cs.values)),
        "candidate_has_tau0": tau0 in cands.taus(),
        "tau_set": ",".join(str(t) for t in cs.values),
        "candidate_taus": ",".join(str(t) for t in cands.taus()),
        "tau_hat": int(cs.meta["tau_hat"]),
    }


def _rep_mixture_musigma(sc: dict, stream: RngStream) -> dict:
    tau0 = len(sc["mu"])
    y, _ = generate_mixture(sc["mu"], sc["sigma"], sc["weights"], sc["n"], stream.child(0))
    cands = candidate_set(
        y, sc["n_candidates"], sc["lam"], sc["tau_max"], stream=stream.child(1)
    )
    mu_set, sigma_set = mu_sigma_confidence_sets(
        y, cands, sc["alpha"], n_sims=sc["n_sims"], stream=stream.child(2)
    )
    present = tau0 in (mu_set.components or {})
    rec: dict = {"tau0_present": present}
    widths = []
    for k in range(tau0):
        if present:
            mu_iv = mu_set.components[tau0][k]
            sg_iv = sigma_set.components[tau0][k]
            rec[f"mu_cover_{k}"] = mu_iv.contains(sc["mu"][k])
            rec[f"sigma_cover_{k}"] = sg_iv.contains(sc["sigma"][k])
            widths.append(mu_iv.length)
        else:
            rec[f"mu_cover_{k}"] = False
            rec[f"sigma_cover_{k}"] = False
    rec["cover"] = all(
        rec[f"mu_cover_{k}"] and rec[f"sigma_cover_{k}"] for k in range(tau0)
    )
    rec["width"] = float(np.mean(widths)) if widths else 0.0
    return rec


_REP_FNS = {
    "binomial_table1": _rep_binomial,
    "uniform_example": _rep_uniform,
    "lrt_compare": _rep_lrt,
    "quantile_figB1": _rep_quantile,
    "mixture_tau": _rep_mixture_tau,
    "mixture_musigma": _rep_mixture_musigma,
}


def _run_one(task) -> tuple[int, int, dict]:
    """Worker body; must stay a module-level function so it pickles."""
    study, sc, seed, s_idx, rep = task
    stream = RngStream(seed).child(s_idx, rep)
    try:
        return s_idx, rep, _REP_FNS[study](sc, stream)
    except Exception as e:  # recorded, not raised: the study keeps going
        return s_idx, rep, {"_error": f"{type(e).__name__}: {e}"}


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _coverage_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else 0.0


def _mean_se(xs: list[float]) -> tuple[float, float]:
    if not xs:
        return 0.0, 0.0
    mean = float(np.mean(xs))
    # an unbounded interval in any replication makes the mean infinite;
    # a spread is meaningless then, so report the mean alone
    if len(xs) < 2 or not math.isfinite(mean):
        return mean, 0.0
    return mean, float(np.std(xs, ddof=1) / math.sqrt(len(xs)))


def _rate(records: list[dict], key: str) -> float:
    return float(np.mean([bool(r[key]) for r in records])) if records else 0.0


def _basic_row(label: str, records: list[dict], n_failed: int,
               cover_key: str, width_key: str, extra: dict | None = None) -> ScenarioRow:
    cov = _rate(records, cover_key)
    mw, wse = _mean_se([float(r[width_key]) for r in records])
    return ScenarioRow(
        scenario=label,
        reps=len(records),
        failures=n_failed,
        coverage=cov,
        coverage_se=_coverage_se(cov, len(records)),
        mean_width=mw,
        width_se=wse,
        extra=_plain(extra or {}),
    )


def _aggregate(study: str, sc: dict, records: list[dict], n_failed: int) -> list[ScenarioRow]:
    label = sc["label"]
    if study == "binomial_table1":
        wc = _rate(records, "wald_cover")
        wm, _ = _mean_se([r["wald_width"] for r in records])
        extra = {
            "wald_coverage": wc,
            "wald_coverage_se": _coverage_se(wc, len(records)),
            "wald_mean_width": wm,
        }
        return [_basic_row(label, records, n_failed, "cover", "width", extra)]
    if study == "uniform_example":
        inc = [r["inclusion"] for r in records]
        extra = {
            "equal": inc.count("equal"),
            "strict_subset": inc.count("strict_subset"),
            "violation": inc.count("violation"),
        }
        return [
            _basic_row(f"{label},method=mean_test", records, n_failed,
                       "test_cover", "test_width"),
            _basic_row(f"{label},method=mean_repro", records, n_failed,
                       "repro_cover", "repro_width", extra),
        ]
    if study == "lrt_compare":
        diffs = [r["lrt_width"] - r["orderstat_width"] for r in records]
        extra = {
            "narrower_fraction": _rate(records, "orderstat_narrower"),
            "mean_width_difference": float(np.mean(diffs)) if diffs else 0.0,
            "inclusion_violations": sum(r["inclusion"] == "violation" for r in records),
        }
        return [
            _basic_row(f"{label},method=orderstat", records, n_failed,
                       "orderstat_cover", "orderstat_width", extra),
            _basic_row(f"{label},method=lrt", records, n_failed,
                       "lrt_cover", "lrt_width"),
        ]
    if study == "quantile_figB1":
        return [_basic_row(label, records, n_failed, "cover", "width")]
    if study == "mixture_tau":
        sets = [r["tau_set"] for r in records]
        hist = {s: sets.count(s) for s in sorted(set(sets))}
        taus_hat = [r["tau_hat"] for r in records]
        extra = {
            "candidate_contains_tau0": _rate(records, "candidate_has_tau0"),
            "tau_set_histogram": hist,
            "tau_hat_histogram": {
                str(t): taus_hat.count(t) for t in sorted(set(taus_hat))
            },
            "mean_set_size": float(np.mean([r["width"] for r in records])) if records else 0.0,
        }
        return [_basic_row(label, records, n_failed, "cover", "width", extra)]
    # mixture_musigma
    tau0 = len(sc["mu"])
    extra = {
        "tau0_present": _rate(records, "tau0_present"),
        "mu_coverage": [_rate(records, f"mu_cover_{k}") for k in range(tau0)],
        "sigma_coverage": [_rate(records, f"sigma_cover_{k}") for k in range(tau0)],
    }
    return [_basic_row(label, records, n_failed, "cover", "width", extra)]


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def resolve_workers(requested: int | None) -> int:
    """Explicit value, else REPROSAMP_WORKERS, else the CPU count."""
    if requested is not None:
        if requested < 1:
            raise ValueError("workers must be at least 1")
        return requested
    env = os.environ.get("REPROSAMP_WORKERS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("REPROSAMP_WORKERS must be at least 1")
        return n
    return os.cpu_count() or 1


def run_study(config: StudyConfig) -> StudyReport:
    """Run every replication of every scenario and aggregate.

    The report depends only on (study, params, reps, seed): replication
    streams are derived from scenario and replication indices, results
    are merged in index order, and failed replications are carried in
    the report rather than silently dropped.  More than 1% failures
    raises :class:`StudyError`.
    """
    params = config.resolved_params()
    reps = config.resolved_reps()
    scenarios = _scenarios(config.study, params)
    tasks = [
        (config.study, sc, config.seed, s_idx, rep)
        for s_idx, sc in enumerate(scenarios)
        for rep in range(reps)
    ]
    workers = resolve_workers(config.workers)
    if workers == 1 or len(tasks) == 1:
        results = [_run_one(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=chunk))

    by_scenario: dict[int, list[dict]] = {i: [] for i in range(len(scenarios))}
    failures: list[dict] = []
    for s_idx, rep, rec in sorted(results, key=lambda x: (x[0], x[1])):
        if "_error" in rec:
            failures.append(
                {"scenario": scenarios[s_idx]["label"], "rep": rep, "error": rec["_error"]}
            )
        else:
            by_scenario[s_idx].append(rec)
    if len(failures) > 0.01 * len(tasks):
        raise StudyError(
            f"{len(failures)} of {len(tasks)} replications failed; "
            f"first: {failures[0]['error']}"
        )

    n_failed_by_scenario = {i: 0 for i in range(len(scenarios))}
    for f in failures:
        for i, sc in enumerate(scenarios):
            if sc["label"] == f["scenario"]:
                n_failed_by_scenario[i] += 1
    rows: list[ScenarioRow] = []
    for s_idx, sc in enumerate(scenarios):
        rows.extend(
            _aggregate(config.study, sc, by_scenario[s_idx], n_failed_by_scenario[s_idx])
        )
    return StudyReport(
        study=config.study,
        seed=config.seed,
        reps=reps,
        params=_plain(params),
        rows=tuple(rows),
        failures=tuple(failures),
    )


def tau_set_histogram(reports) -> dict[str, int]:
    """Frequency table of distinct order sets across mixture_tau reports."""
    if isinstance(reports, StudyReport):
        reports = [reports]
    hist: dict[str, int] = {}
    for rep in reports:
        if rep.study != "mixture_tau":
            raise ValueError(f"expected mixture_tau reports, got {rep.study!r}")
        for row in rep.rows:
            for key, count in row.extra.get("tau_set_histogram", {}).items():
                hist[key] = hist.get(key, 0) + count
    return dict(sorted(hist.items()))


def lrt_width_comparison(config: StudyConfig) -> dict:
    """Paired width comparison of the two uniform-location intervals.

    Runs (or reuses) an ``lrt_compare`` study and reports, per sample
    size, the two mean widths, their mean per-replication difference,
    and the fraction of replications where the repro-style interval is
    strictly narrower.
    """
    if config.study != "lrt_compare":
        raise ValueError("config.study must be 'lrt_compare'")
    report = run_study(config)
    rows = {r.scenario: r for r in report.rows}
    out = {}
    for n in report.params["n"]:
        os_row = rows[f"n={n},method=orderstat"]
        lrt_row = rows[f"n={n},method=lrt"]
        out[f"n={n}"] = {
            "orderstat_mean_width": os_row.mean_width,
            "lrt_mean_width": lrt_row.mean_width,
            "mean_width_difference": os_row.extra["mean_width_difference"],
            "narrower_fraction": os_row.extra["narrower_fraction"],
        }
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_CSV_COLUMNS = (
    "study", "scenario", "reps", "failures",
    "coverage", "coverage_se", "mean_width", "width_se", "extra",
)


def _sig4(x):
    """Floats at 4 significant digits, recursively; CSV cells stay short."""
    if isinstance(x, float):
        return float(f"{x:.4g}")
    if isinstance(x, dict):
        return {k: _sig4(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sig4(v) for v in x]
    return x


def write_report(report: StudyReport, path, format: str = "csv") -> None:
    """Serialize a report: one CSV row per scenario, or the full JSON dict."""
    path = Path(path)
    if format == "json":
        path.write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
        return
    if format != "csv":
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_COLUMNS)
        for r in report.rows:
            w.writerow(
                [
                    report.study,
                    r.scenario,
                    r.reps,
                    r.failures,
                    f"{r.coverage:.4g}",
                    f"{r.coverage_se:.4g}",
                    f"{r.mean_width:.4g}",
                    f"{r.width_se:.4g}",
                    json.dumps(_sig4(_plain(r.extra)), sort_keys=True),
                ]
            )


def read_report(path) -> StudyReport:
    """Load a JSON report written by :func:`write_report`."""
    return StudyReport.from_json_dict(json.loads(Path(path).read_text()))
