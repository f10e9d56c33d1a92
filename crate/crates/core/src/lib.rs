//! Homogeneous binary multiplicative attribute graphs: exact samplers, the
//! compound-binomial degree law, its log-normal limit and Berry-Esseen bounds.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// oracle constants keep every digit they were computed with
#![allow(clippy::excessive_precision)]

pub mod binomial;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod limit;
pub mod model;
pub mod pmf;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;

pub use bounds::{
    berry_esseen_bound, lognormal_interval_bound, optimize_bound, psi, ratio_concentration_bound, BoundCertificate,
    BoundGrid, C_STAR_DEFAULT,
};
pub use error::{MagError, Result};
pub use experiment::{
    empirical_sup_delta, run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, SupDelta,
};
pub use limit::{kl_params, kl_reconciled_law, lognormal_cdf, KlParams, LimitModel, LimitPoint, LogNormalSpec};
pub use model::{
    classify_regime, derive_constants, scaling_at, DerivedConstants, ModelParams, Regime, RegimeClass, Rounding,
    Scaling, ScalingPoint,
};
pub use pmf::{exact_degree_cdf, exact_degree_pmf, prob_degree_zero, DegreePmfTable};
pub use sampler::{
    link_probability, sample_degrees_direct, sample_degrees_full, sample_graph, BitRow, DegreeSampleSet, MagGraph,
    SampleMethod,
};
