// Negated comparisons such as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bahadur;
pub mod empirical;
pub mod error;
pub mod innovations;
pub mod linear_process;
pub mod nonlinear_process;
pub mod oracle;
pub mod experiments;
pub(crate) mod quad;
pub mod rng;

pub use error::{Error, Result};
pub use innovations::{DensityPoint, InnovationModel};
pub use oracle::{MarginalOracle, Mixture, OraclePoint};
pub use rng::{derive_seed, Stream};
pub use linear_process::{
    build_marginal_oracle, rate_function, simulate_path, CoefficientSchedule, LinearProcessPath, PathSimulator,
    RateKind, RateParams, SlowlyVarying, Truncation, TruncationPolicy,
};
pub use nonlinear_process::{
    block_ecdf, estimate_gmc, simulate_chain, simulate_m_dependent, GmcReport, IteratedMapModel, MDependentPaths,
    MapKind,
};
pub use empirical::{ks_critical, ks_distance, ks_two_sample, oscillation_modulus, trimmed_mean, winsorized_mean, ConditionalPoint, Decomposition, EmpiricalSample, Side, WinsorVariant};
pub use bahadur::{first_order_remainder, expansion_remainder, increment_statistic, kiefer_limit, remainder, resolve_branch, resolved_grid, uniform_remainder, BahadurDecomposition, Branch, Expansion, Increment, QuantileLevels, UniformRemainder};
pub use experiments::{
    aggregate_dist, aggregate_rate, build_oracle, fit_loglog_slope, read_rows, reaggregate, remainder_exponent,
    run_dichotomy_experiment, run_experiment, run_gmc_experiment, run_oscillation_experiment, run_rate_experiment,
    run_trimmed_clt_experiment, run_uniform_rate_experiment, simulate_process, summarize_distribution, trimmed_target,
    write_rows, DistReport, DistSummary, ExperimentConfig, ExperimentKind, ExperimentSection, LogLogFit, Outcome,
    OutputSection, PerN, Process, ProcessKind, ProcessSection, RateReport, RawRow, Report, RunOptions,
};
