"""Command-line entry point.

Every subcommand writes one JSON document (or, for ``simulate``, a CSV
or JSON report) to stdout or ``--out``.  Results never embed wall-clock
state, so a fixed ``--seed`` reproduces the output byte for byte; the
optional ``--log`` file records command, config, seed, version,
timestamp, and a digest of each result, one JSON line per run.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from reprosamp import __version__
from reprosamp.binomial import binomial_repro_set, wald_interval
from reprosamp.engine import RngStream
from reprosamp.mixture import candidate_set, mu_sigma_confidence_sets, tau_confidence_set
from reprosamp.quantile import quantile_ci, robust_location_ci, robust_scale_ci
from reprosamp.studies import (
    STUDIES,
    StudyConfig,
    StudyError,
    paper_scale,
    run_study,
    write_report,
)
from reprosamp.uniform import (
    bernoulli_single_obs_ci,
    uniform_lrt_ci,
    uniform_mean_repro_ci,
    uniform_mean_test_ci,
    uniform_orderstat_ci,
)

_PROB = click.FloatRange(0.0, 1.0, min_open=True, max_open=True)


# ---------------------------------------------------------------------------
# data ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """A numeric column pulled from a delimited text file."""

    values: list
    source: str
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dataset {self.source} is empty")
        if not all(np.isfinite(self.values)):
            raise ValueError(f"dataset {self.source} contains non-finite values")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_dataset(path, column=None) -> Dataset:
    """Read one numeric column from a comma-delimited file.

    A first row with any non-numeric cell is treated as a header.
    ``column`` selects by header name or zero-based index; the default
    is the first column.  Blank lines in the body are rejected by line
    number rather than skipped: silent row loss would shift n.
    """
    path = Path(path)
    raw = path.read_text()
    lines = raw.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ValueError(f"empty dataset file: {path}")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise ValueError(f"{path}: blank line at line {lineno}")

    rows = [[c.strip() for c in line.split(",")] for line in lines]
    header = None
    if any(not _is_number(c) for c in rows[0]):
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path}: header only, no data rows")

    if column is None:
        idx = 0
    elif isinstance(column, int) or str(column).lstrip("-").isdigit():
        idx = int(column)
    elif header and column in header:
        idx = header.index(column)
    else:
        raise ValueError(f"{path}: no column named {column!r} (header: {header})")

    first_data_line = 2 if header else 1
    values = []
    for i, row in enumerate(rows):
        lineno = first_data_line + i
        if not 0 <= idx < len(row):
            raise ValueError(f"{path}: line {lineno} has no column {idx}")
        cell = row[idx]
        if not _is_number(cell):
            raise ValueError(
                f"{path}: non-numeric value {cell!r} at line {lineno}, column {idx}"
            )
        values.append(float(cell))
    return Dataset(values=values, source=str(path), n=len(values))


# ---------------------------------------------------------------------------
# run records and output plumbing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """One audit line per CLI run; the digest ties the line to its output."""

    command: str
    config: dict
    seed: int
    version: str
    timestamp: str
    digest: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "seed": self.seed,
                "version": self.version,
                "timestamp": self.timestamp,
                "digest": self.digest,
            },
            sort_keys=True,
        )


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _emit(ctx, text: str, config: dict) -> None:
    """Write the result, then the run record if a log file was asked for."""
    opts = ctx.obj
    if opts["out"]:
        Path(opts["out"]).write_text(text)
    else:
        click.echo(text, nl=False)
    if opts["log"]:
        record = RunRecord(
            command=ctx.command_path,
            config=config,
            seed=opts["seed"],
            version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
            digest=_digest(text),
        )
        with open(opts["log"], "a") as fh:
            fh.write(record.to_json_line() + "\n")


def _emit_json(ctx, command: str, config: dict, result: dict) -> None:
    payload = {"command": command, "config": config, "result": result}
    _emit(ctx, json.dumps(payload, indent=2, sort_keys=True) + "\n", config)


def _runtime_errors(f):
    """Bad file contents or failed runs exit 1; click keeps usage errors at 2."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, OSError, StudyError) as e:
            raise click.ClickException(str(e))

    return wrapper


# ---------------------------------------------------------------------------
# command group
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
              help="Root seed for every stochastic step.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the result here instead of stdout.")
@click.option("--log", type=click.Path(dir_okay=False), default=None,
              help="Append a one-line JSON run record to this file.")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Process count for simulate (default: REPROSAMP_WORKERS or all CPUs).")
@click.pass_context
def main(ctx, seed, out, log, workers):
    """Simulation-based confidence sets and their replication studies."""
    ctx.obj = {"seed": seed, "out": out, "log": log, "workers": workers}


@main.command("binomial-ci")
@click.option("--y", type=click.IntRange(min=0), required=True, help="Observed success count.")
@click.option("--r", type=click.IntRange(min=1), required=True, help="Number of trials.")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.option("--grid-step", type=click.FloatRange(min=0, min_open=True), default=0.0005,
              show_default=True)
@click.option("--method", type=click.Choice(["repro", "wald", "both"]), default="both",
              show_default=True)
@click.pass_context
@_runtime_errors
def binomial_ci(ctx, y, r, alpha, grid_step, method):
    """Confidence set for a binomial success probability."""
    if y > r:
        raise click.UsageError(f"--y must not exceed --r ({y} > {r})")
    config = {"y": y, "r": r, "alpha": alpha, "grid_step": grid_step, "method": method}
    result = {}
    if method in ("repro", "both"):
        result["repro"] = binomial_repro_set(y, r, alpha, grid_step).to_json_dict()
    if method in ("wald", "both"):
        result["wald"] = wald_interval(y, r, alpha).to_json_dict()
    _emit_json(ctx, "binomial-ci", config, result)


@main.command("quantile-ci")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--column", default=None, help="Column name or index (default: first).")
@click.option("--zeta", type=_PROB, required=True, help="Quantile level.")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.pass_context
@_runtime_errors
def quantile_ci_cmd(ctx, data, column, zeta, alpha):
    """Distribution-free confidence interval for a quantile."""
    ds = load_dataset(data, column)
    config = {"data": ds.source, "n": ds.n, "zeta": zeta, "alpha": alpha}
    _emit_json(ctx, "quantile-ci", config, quantile_ci(ds.values, zeta, alpha).to_json_dict())


@main.command("robust-ci")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--column", default=None, help="Column name or index (default: first).")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.option("--flags", default=None,
              help="Comma-separated 0/1 contamination flags, one per observation.")
@click.option("--scale-sims", type=click.IntRange(min=100), default=5000, show_default=True,
              help="Simulation size for the scale calibration.")
@click.pass_context
@_runtime_errors
def robust_ci(ctx, data, column, alpha, flags, scale_sims):
    """Contamination-aware location and scale intervals."""
    ds = load_dataset(data, column)
    flag_arr = None
    if flags is not None:
        try:
            flag_arr = np.array([int(c) for c in flags.split(",")], dtype=bool)
        except ValueError:
            raise click.UsageError("--flags must be a comma-separated list of 0/1")
        if flag_arr.size != ds.n:
            raise click.UsageError(f"--flags has {flag_arr.size} entries for {ds.n} observations")
    config = {
        "data": ds.source, "n": ds.n, "alpha": alpha,
        "flagged": int(flag_arr.sum()) if flag_arr is not None else 0,
        "scale_sims": scale_sims,
    }
    stream = RngStream(ctx.obj["seed"]).child(0)
    result = {
        "location": robust_location_ci(ds.values, alpha, flags=flag_arr).to_json_dict(),
        "scale": robust_scale_ci(
            ds.values, alpha, stream=stream, n_sims=scale_sims
        ).to_json_dict(),
    }
    _emit_json(ctx, "robust-ci", config, result)


@main.command("uniform-ci")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--column", default=None, help="Column name or index (default: first).")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.option("--method", type=click.Choice(["repro", "mean-test", "lrt", "orderstat"]),
              default="repro", show_default=True)
@click.pass_context
@_runtime_errors
def uniform_ci(ctx, data, column, alpha, method):
    """Center of a uniform window around the data."""
    ds = load_dataset(data, column)
    fn = {
        "repro": uniform_mean_repro_ci,
        "mean-test": uniform_mean_test_ci,
        "lrt": uniform_lrt_ci,
        "orderstat": uniform_orderstat_ci,
    }[method]
    config = {"data": ds.source, "n": ds.n, "alpha": alpha, "method": method}
    _emit_json(ctx, "uniform-ci", config, fn(ds.values, alpha).to_json_dict())


@main.command("bernoulli-one")
@click.option("--y", type=click.IntRange(0, 1), required=True, help="The single observation.")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.pass_context
@_runtime_errors
def bernoulli_one(ctx, y, alpha):
    """Success-probability set from a single Bernoulli draw."""
    config = {"y": y, "alpha": alpha}
    _emit_json(ctx, "bernoulli-one", config, bernoulli_single_obs_ci(y, alpha).to_json_dict())


@main.command("mixture-tau-ci")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--column", default=None, help="Column name or index (default: first).")
@click.option("--alpha", type=_PROB, default=0.95, show_default=True)
@click.option("--lambda", "lam", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help="Order penalty weight in the candidate search.")
@click.option("--tau-max", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--candidates", type=click.IntRange(min=1), default=200, show_default=True,
              help="Candidate draws for the membership search.")
@click.option("--mc", type=click.IntRange(min=1), default=1000, show_default=True,
              help="Monte-Carlo size for the order statistic.")
@click.option("--component-sims", type=click.IntRange(min=100), default=5000,
              show_default=True, help="Simulation size for component scale intervals.")
@click.pass_context
@_runtime_errors
def mixture_tau_ci(ctx, data, column, alpha, lam, tau_max, candidates, mc, component_sims):
    """Order, center, and scale sets for a normal mixture."""
    ds = load_dataset(data, column)
    y = np.asarray(ds.values)
    root = RngStream(ctx.obj["seed"])
    cands = candidate_set(y, candidates, lam, tau_max, stream=root.child(1))
    tau_set = tau_confidence_set(y, cands, alpha, mc, tau_max, stream=root.child(2))
    centers, scales = mu_sigma_confidence_sets(
        y, cands, alpha, n_sims=component_sims, stream=root.child(3)
    )
    config = {
        "data": ds.source, "n": ds.n, "alpha": alpha, "lambda": lam,
        "tau_max": tau_max, "candidates": candidates, "mc": mc,
        "component_sims": component_sims,
    }
    result = {
        "tau_set": tau_set.to_json_dict(),
        "candidate_summary": {
            "n_draws": cands.n_draws,
            "n_memberships": len(cands.entries),
            "orders": {str(t): cands.tau_multiplicity(t) for t in cands.taus()},
        },
        "per_component_mu_sigma_sets": {
            "centers": centers.to_json_dict(),
            "scales": scales.to_json_dict(),
        },
    }
    _emit_json(ctx, "mixture-tau-ci", config, result)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_config_file(path) -> dict:
    """Flat key=value study parameters; commas make tuples."""
    params = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        value = value.strip()
        if "," in value:
            params[key.strip()] = tuple(
                _parse_scalar(v.strip()) for v in value.split(",") if v.strip()
            )
        else:
            params[key.strip()] = _parse_scalar(value)
    return params


@main.command("simulate")
@click.option("--study", type=click.Choice(STUDIES), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="key=value file of study parameters.")
@click.option("--reps", type=click.IntRange(min=1), default=None,
              help="Replications (default: the study's published count).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.option("--paper-scale", "at_paper_scale", is_flag=True,
              help="Mixture studies at full published scale (200 reps).")
@click.option("--figures/--no-figures", "with_figures", default=True, show_default=True,
              help="Render summary figures next to the report file.")
@click.pass_context
@_runtime_errors
def simulate_cmd(ctx, study, config_path, reps, fmt, at_paper_scale, with_figures):
    """Run a replication study and write its report."""
    params = read_config_file(config_path) if config_path else {}
    cfg = StudyConfig(
        study=study,
        reps=reps,
        seed=ctx.obj["seed"],
        params=params,
        workers=ctx.obj["workers"],
    )
    if at_paper_scale:
        cfg = paper_scale(cfg)
    report = run_study(cfg)

    out = ctx.obj["out"]
    if out:
        write_report(report, out, format=fmt)
        text = Path(out).read_text()
    else:
        import tempfile

        with tempfile.NamedTemporaryFile("r", suffix=f".{fmt}") as tmp:
            write_report(report, tmp.name, format=fmt)
            text = Path(tmp.name).read_text()
        click.echo(text, nl=False)

    if ctx.obj["log"]:
        record = RunRecord(
            command=ctx.command_path,
            config={"study": study, "reps": report.reps, "params": report.params,
                    "format": fmt, "paper_scale": at_paper_scale},
            seed=ctx.obj["seed"],
            version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
            digest=_digest(text),
        )
        with open(ctx.obj["log"], "a") as fh:
            fh.write(record.to_json_line() + "\n")

    if with_figures:
        if out:
            from reprosamp.figures import render_figures

            paths = render_figures(report, Path(out).parent)
            for p in paths:
                click.echo(f"figure: {p}", err=True)
        else:
            click.echo("figures skipped: no --out path to place them next to", err=True)


if __name__ == "__main__":
    main()
