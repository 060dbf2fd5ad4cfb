"""Monte-Carlo confidence sets for continuous, discrete, and mixed parameters."""

from reprosamp.binomial import binomial_repro_set, wald_interval
from reprosamp.engine import (
    BorelInterval,
    ConfidenceSet,
    DepthRegion,
    FiniteSpace,
    GenerativeModel,
    GridSpace,
    Interval,
    NuclearMapping,
    ProductSpace,
    RngStream,
    borel_interval_from_samples,
    depth_central_region,
    monte_carlo_confidence_set,
    nuisance_plausibility,
    profile_nuclear_value,
    repro_pvalue,
)
from reprosamp.mixture import (
    CandidateEntry,
    CandidateSet,
    MixtureFit,
    bic_tau_hat,
    candidate_set,
    component_overlap_flags,
    component_stats,
    conditional_repro_sample,
    generate_mixture,
    mu_sigma_confidence_sets,
    nuclear_statistic,
    tau_confidence_set,
)
from reprosamp.quantile import (
    MadCalibration,
    calibrate_mad,
    estimate_delta,
    quantile_ci,
    robust_location_ci,
    robust_scale_ci,
    span_overlap_flags,
)
from reprosamp.studies import (
    STUDIES,
    ScenarioRow,
    StudyConfig,
    StudyError,
    StudyReport,
    lrt_width_comparison,
    paper_scale,
    read_report,
    resolve_workers,
    run_study,
    tau_set_histogram,
    write_report,
)
from reprosamp.uniform import (
    bernoulli_single_obs_ci,
    inclusion_check,
    irwin_hall_cdf,
    irwin_hall_quantile,
    range_cutoff,
    uniform_lrt_ci,
    uniform_mean_repro_ci,
    uniform_mean_test_ci,
    uniform_orderstat_ci,
)

__version__ = "0.1.0"

__all__ = [
    "BorelInterval",
    "CandidateEntry",
    "CandidateSet",
    "ConfidenceSet",
    "DepthRegion",
    "FiniteSpace",
    "GenerativeModel",
    "GridSpace",
    "Interval",
    "MadCalibration",
    "MixtureFit",
    "NuclearMapping",
    "ProductSpace",
    "RngStream",
    "STUDIES",
    "ScenarioRow",
    "StudyConfig",
    "StudyError",
    "StudyReport",
    "bernoulli_single_obs_ci",
    "bic_tau_hat",
    "binomial_repro_set",
    "borel_interval_from_samples",
    "calibrate_mad",
    "candidate_set",
    "component_overlap_flags",
    "component_stats",
    "conditional_repro_sample",
    "depth_central_region",
    "estimate_delta",
    "generate_mixture",
    "inclusion_check",
    "irwin_hall_cdf",
    "irwin_hall_quantile",
    "lrt_width_comparison",
    "monte_carlo_confidence_set",
    "mu_sigma_confidence_sets",
    "nuclear_statistic",
    "nuisance_plausibility",
    "paper_scale",
    "profile_nuclear_value",
    "quantile_ci",
    "range_cutoff",
    "read_report",
    "repro_pvalue",
    "resolve_workers",
    "robust_location_ci",
    "robust_scale_ci",
    "run_study",
    "span_overlap_flags",
    "tau_confidence_set",
    "tau_set_histogram",
    "uniform_lrt_ci",
    "uniform_mean_repro_ci",
    "uniform_mean_test_ci",
    "uniform_orderstat_ci",
    "wald_interval",
    "write_report",
    "__version__",
]
