"""Adaptive sequential Monte Carlo for structured Bayesian cross-validation.

Transports baseline posterior particles to case-deleted posteriors along
automatically constructed exponent paths, gating cheap Pareto-smoothed
importance sampling against invariant-kernel rejuvenation, for LOO,
leave-group-out, backward leave-end-out and group K-fold schemes.
"""

__version__ = "0.1.0"

from .core import (
    ALL_GROUPS,
    DeletionScheme,
    EstimandSpec,
    ParameterDraw,
    ParameterLayout,
    UnitIndex,
    build_group_kfold_scheme,
    build_leo_schedule,
    build_lgo_scheme,
    build_loo_scheme,
)
from .weights import (
    DegenerateWeightsError,
    ParetoDiagnostic,
    WeightVector,
    ess,
    gpd_fit,
    log_sum_exp,
    normalize,
    pareto_smooth,
    weighted_log_estimand,
)
from .paths import (
    DeletionPath,
    PathState,
    PathStep,
    incremental_log_weights,
    log_incremental_weight,
    ordered_exponent,
    path_for_fold,
    solve_next_n,
    tempering_exponent,
)
from .kernels import KernelConfig, KernelStats, hmc_step, rwm_step, tune_step_size
from .gibbs import DnsPriors, DnsState, dns_gibbs_sweep, dns_gibbs_sweep_plain, ffbs, iw_sample
from .baseline import BaselineConfig, BaselineStats, run_baseline_mcmc, run_mcmc
from .engine import (
    CvRun,
    EngineConfig,
    FoldResult,
    ParticleSystem,
    derive_rng,
    psis_cv,
    refit_cv,
    resample_systematic,
    run_cv,
    run_fold,
)
from .config import ConfigError, RunConfig, config_to_toml, parse_config
from .dataio import DataError, build_dataset, build_model, ingest_csv, write_csv
