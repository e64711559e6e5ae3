//! Quickselect-type algorithms on words emitted by probabilistic sources,
//! with tools for the limit of their normalized cost and its expectation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod algo;
pub mod config;
pub mod context;
pub mod cost;
pub mod error;
pub mod expectation;
pub mod harness;
pub mod limit;
pub mod quad;
pub mod rng;
pub mod source;
pub mod stats;

pub use algo::{
    run_quickquant, run_quickselect_random_pivot, run_quickval, Algorithm, PivotStep, RunRecord, SeedArray, SeedStream,
    Target,
};
pub use config::{parse_cost, parse_source};
pub use context::{RunContext, RunFlags};
pub use cost::{beta, lcp_depth, tame_check, CostModel, PositionalTable, TameReport};
pub use error::{Error, Result};
pub use expectation::{
    expected_key_closed, expected_quickrand, expected_s, expected_s_integral, expected_s_series, j_of_prefix, l_fn,
    ExpectationResult, IntegralOptions, Method, QuickRandGrid,
};
pub use harness::{
    convergence_experiment, coupled_path, coupled_run, distribution_compare, target_rank, ConvergenceReport,
    CoupledPath, CoupledRun, ExperimentConfig,
};
pub use limit::{
    accumulate_limit, chain_from_pivots, integral_i, nu_closed, nu_monte_carlo, sample_S, sample_dickman,
    sample_pivot_chain, IntegralValue, LimitSample, PivotChain, Rect, StopRule, TruncationPolicy,
};
pub use source::{
    Alphabet, FundamentalInterval, KeyPath, MassEnvelope, Node, Precision, Prefix, SourceKind, SourceModel, State,
    Symbol, TameParams, TameWarning,
};
pub use stats::{ks_two_sample, moment_report, KsResult, MeanEstimate, MomentRow};
