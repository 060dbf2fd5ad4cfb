"""Figure rendering for study reports.

One PNG per report, drawn from the aggregated rows only, so a figure
can always be regenerated from a saved JSON report.  The Agg backend is
forced: rendering happens in batch runs and on CI boxes with no display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from reprosamp.studies import StudyReport

_TARGET_STYLE = {"color": "0.4", "linestyle": "--", "linewidth": 1.0}


def render_figures(report: StudyReport, out_dir) -> list[Path]:
    """Render the report's figure(s) into ``out_dir``; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig = plt.figure(figsize=(7.0, 4.2))
    try:
        _RENDERERS[report.study](fig, report)
        fig.suptitle(report.study.replace("_", " "), fontsize=11)
        path = out_dir / f"{report.study}.png"
        fig.savefig(path, dpi=130, bbox_inches="tight")
    finally:
        plt.close(fig)
    return [path]


def _coverage_bars(ax, labels, coverages, ses, level):
    xs = range(len(labels))
    ax.bar(xs, coverages, yerr=[2 * s for s in ses], capsize=3, color="#4878a8")
    ax.axhline(level, **_TARGET_STYLE)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("coverage")


def _binomial(fig, report):
    ax1, ax2 = fig.subplots(1, 2)
    labels = [r.scenario for r in report.rows]
    level = report.params["alpha"]
    _coverage_bars(ax1, labels, [r.coverage for r in report.rows],
                   [r.coverage_se for r in report.rows], level)
    wald = [r.extra["wald_coverage"] for r in report.rows]
    xs = range(len(labels))
    ax2.plot(xs, [r.coverage for r in report.rows], "o-", label="repro")
    ax2.plot(xs, wald, "s-", label="wald")
    ax2.axhline(level, **_TARGET_STYLE)
    ax2.set_xticks(list(xs))
    ax2.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax2.set_ylabel("coverage")
    ax2.legend(fontsize=8)


def _uniform(fig, report):
    ax1, ax2 = fig.subplots(1, 2)
    labels = [r.scenario.split("method=")[1] for r in report.rows]
    _coverage_bars(ax1, labels, [r.coverage for r in report.rows],
                   [r.coverage_se for r in report.rows], report.params["alpha"])
    ax2.bar(range(len(labels)), [r.mean_width for r in report.rows], color="#a85848")
    ax2.set_xticks(range(len(labels)))
    ax2.set_xticklabels(labels, fontsize=8)
    ax2.set_ylabel("mean interval length")


def _lrt(fig, report):
    ax = fig.subplots()
    ns = list(report.params["n"])
    for method, marker in (("orderstat", "o"), ("lrt", "s")):
        widths = [
            next(r.mean_width for r in report.rows if r.scenario == f"n={n},method={method}")
            for n in ns
        ]
        ax.plot(ns, widths, marker + "-", label=method)
    ax.set_xscale("log")
    ax.set_xlabel("sample size")
    ax.set_ylabel("mean interval length")
    ax.legend(fontsize=8)


def _quantile(fig, report):
    ax = fig.subplots()
    dists = list(report.params["distribution"])
    zetas = list(report.params["zeta"])
    for dist, marker in zip(dists, "os^v"):
        cov = [
            next(r.coverage for r in report.rows if r.scenario == f"{dist},zeta={z}")
            for z in zetas
        ]
        ax.plot(zetas, cov, marker + "-", label=dist)
    ax.axhline(report.params["alpha"], **_TARGET_STYLE)
    ax.set_ylim(0.9, 1.0)
    ax.set_xlabel("quantile level")
    ax.set_ylabel("coverage")
    ax.legend(fontsize=8)


def _mixture_tau(fig, report):
    ax1, ax2 = fig.subplots(1, 2)
    hist = report.rows[0].extra["tau_set_histogram"]
    labels = list(hist)
    ax1.bar(range(len(labels)), [hist[k] for k in labels], color="#4878a8")
    ax1.set_xticks(range(len(labels)))
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("replications")
    ax1.set_xlabel("confidence set for the order")
    row = report.rows[0]
    ax2.bar([0], [row.coverage], yerr=[2 * row.coverage_se], capsize=3, color="#48a878")
    ax2.axhline(report.params["alpha"], **_TARGET_STYLE)
    ax2.set_xticks([0])
    ax2.set_xticklabels([row.scenario], fontsize=8)
    ax2.set_ylim(0.0, 1.05)
    ax2.set_ylabel("coverage")


def _mixture_musigma(fig, report):
    ax = fig.subplots()
    row = report.rows[0]
    mu_cov = row.extra["mu_coverage"]
    sg_cov = row.extra["sigma_coverage"]
    k = len(mu_cov)
    xs = list(range(k))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], mu_cov, width, label="centers")
    ax.bar([x + width / 2 for x in xs], sg_cov, width, label="scales")
    ax.axhline(report.params["alpha"], **_TARGET_STYLE)
    ax.set_xticks(xs)
    ax.set_xticklabels([f"component {i + 1}" for i in xs], fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("coverage")
    ax.legend(fontsize=8)


_RENDERERS = {
    "binomial_table1": _binomial,
    "uniform_example": _uniform,
    "lrt_compare": _lrt,
    "quantile_figB1": _quantile,
    "mixture_tau": _mixture_tau,
    "mixture_musigma": _mixture_musigma,
}
