"""Sampling conditionally on a rare event by generalized splitting.

The package turns a model (base density, importance function, level
kernel) plus a level schedule into:

* approximate samples from the law conditioned on the rare event,
* an unbiased estimate of the event probability, and
* non-asymptotic accuracy bounds computed from the run's own tour-size
  moments, usable as convergence diagnostics.

See the README for the command-line interface and worked demos.
"""
from .diagnostics import (
    BOUND_CSV_HEADER,
    Bound,
    BoundReport,
    MomentSummary,
    SetClassSpec,
    WaldReport,
    bound_expected_tv_b5,
    bound_expected_tv_b6,
    bound_mae_fixed_n,
    bound_mae_until_t,
    bound_tv_asymptotic,
    bound_tv_fixed_n,
    bound_tv_until_t,
    empirical_ks,
    estimate_moments,
    evaluate_bounds,
    exact_moments_from_pmf,
    wald_check,
    write_bound_csv,
)
from .engine import (
    ExceedT,
    FixedN,
    LevelSchedule,
    ModelSpec,
    RunLedger,
    TrialResult,
    collect_fixed_n,
    collect_until_t,
    empirical_measure,
    run_gs_trial,
    run_nonempty_trial,
)
from .errors import (
    DataFormatError,
    GsplitError,
    InsufficientDataError,
    KernelFailureError,
    MemoryCapError,
    RetryLimitError,
    ScheduleError,
    ZeroMassIntervalError,
)
from .estimators import (
    MARGINAL_HEADER,
    OracleCheck,
    ProbabilityEstimate,
    RawTrials,
    SetPredicate,
    estimate_conditional_probability,
    estimate_rare_event_probability,
    estimate_rare_event_probability_from_ledger,
    simulate_raw_trials,
    summarize_marginals,
    unbiasedness_oracle_check,
    write_marginal_csv,
)
from .lasso import (
    LassoModel,
    RegressionData,
    lasso_posterior_model,
    load_diabetes_csv,
    standardize_regression,
)
from .pilot import PilotConfig, PilotReport, pilot_levels
from .smc import (
    ComparisonResult,
    SmcConfig,
    SmcResult,
    compare_methods,
    replicate_smc,
    replicate_splitting,
    run_smc,
    write_comparison_csv,
)
from .toy import ToyNormalModel, normal_tail, normal_tail_quantile

__version__ = "1.0.0"

__all__ = [
    "BOUND_CSV_HEADER",
    "Bound",
    "BoundReport",
    "ComparisonResult",
    "DataFormatError",
    "ExceedT",
    "FixedN",
    "GsplitError",
    "InsufficientDataError",
    "KernelFailureError",
    "LassoModel",
    "LevelSchedule",
    "MARGINAL_HEADER",
    "MemoryCapError",
    "ModelSpec",
    "MomentSummary",
    "OracleCheck",
    "PilotConfig",
    "PilotReport",
    "ProbabilityEstimate",
    "RawTrials",
    "RegressionData",
    "RetryLimitError",
    "RunLedger",
    "ScheduleError",
    "SetClassSpec",
    "SetPredicate",
    "SmcConfig",
    "SmcResult",
    "ToyNormalModel",
    "TrialResult",
    "WaldReport",
    "ZeroMassIntervalError",
    "bound_expected_tv_b5",
    "bound_expected_tv_b6",
    "bound_mae_fixed_n",
    "bound_mae_until_t",
    "bound_tv_asymptotic",
    "bound_tv_fixed_n",
    "bound_tv_until_t",
    "collect_fixed_n",
    "collect_until_t",
    "compare_methods",
    "empirical_ks",
    "empirical_measure",
    "estimate_conditional_probability",
    "estimate_moments",
    "estimate_rare_event_probability",
    "estimate_rare_event_probability_from_ledger",
    "evaluate_bounds",
    "exact_moments_from_pmf",
    "lasso_posterior_model",
    "load_diabetes_csv",
    "normal_tail",
    "normal_tail_quantile",
    "pilot_levels",
    "replicate_smc",
    "replicate_splitting",
    "run_gs_trial",
    "run_nonempty_trial",
    "run_smc",
    "simulate_raw_trials",
    "standardize_regression",
    "summarize_marginals",
    "unbiasedness_oracle_check",
    "wald_check",
    "write_bound_csv",
    "write_comparison_csv",
    "write_marginal_csv",
]
