"""Adequacy checks for Bayesian inverse-regression models.

Builds reference distributions for covariate-based discrepancy measures from
leave-one-out covariate posteriors, sampled either by an importance-resampling
shortcut (one pilot chain reused for every case) or by brute-force n-fold
MCMC, and turns them into accept/reject decisions.
"""

from .core import (
    ChainInitError,
    ConfigError,
    DataError,
    Dataset,
    DegenerateReferenceError,
    DegenerateWeightsError,
    DimensionError,
    ExponentialPrior,
    FlatPositivePrior,
    Interval,
    IRDError,
    ModelSpec,
    NormalPrior,
    RngStream,
    SamplerHints,
    StudyAbortError,
    TooFewDrawsError,
    UniformPrior,
    log_full_kernel,
    log_xval_kernel,
    read_dataset_csv,
    write_dataset_csv,
)
from .mcmc import (
    Chain,
    DiagnosticsSummary,
    MCMCConfig,
    diagnostics,
    run_pilot_chain,
    sample_conditional_x,
    write_chain_csv,
)
from .irmcmc import (
    IRMCMCConfig,
    XValDraws,
    brute_force_xval,
    importance_log_weight,
    resample_indices,
    run_irmcmc,
    select_pilot_case,
    write_weight_diagnostics_csv,
    write_xval_csv,
)
from .discrepancy import (
    DiscrepancyReport,
    ReferenceDistribution,
    assemble_reference,
    assess,
    case_outlier_check,
    choose_epsilon,
    credible_region_check,
    decide,
    hpd_interval,
    p_ird,
    posterior_probability,
    t1,
    t2,
    t3,
    write_reference_csv,
)
from .zoo import (
    ChironomidSpec,
    GeneratorSpec,
    build_model,
    chironomid_model,
    cv_theta_exact,
    cv_x_exact_logpdf,
    cv_x_exact_sample,
    forward_predictive_logpmf,
    forward_predictive_sample,
    geometric_model,
    poisson_model,
    polynomial_poisson_model,
    response_curve,
    simulate_chironomid,
    simulate_dataset,
)
from .studies import (
    CalibrationResult,
    FitSpec,
    OverfitDemoResult,
    StudyResult,
    StudyScenario,
    TimingComparison,
    desk_irmcmc_config,
    run_calibration_study,
    run_overfit_demo,
    run_prior_flatness_study,
    run_study,
    run_timing_comparison,
    run_variable_selection_study,
    scenario_from_dict,
    scenario_to_dict,
    write_replicates_csv,
)

__version__ = "0.1.0"
