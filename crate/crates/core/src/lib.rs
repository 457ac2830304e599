//! Asymptotic entropy, rate of escape and growth of random walks on free
//! products of finite Markov chains and of selected groups.
//!
//! The numeric core is generic over [`Scalar`] (`f32`, `f64`); configuration
//! parsing keeps probabilities exact as [`BigRational`] until validation.
//! Concrete `f64` aliases are exported at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod entropy;
pub mod error;
pub mod exit_chain;
pub mod factor;
pub mod group;
pub mod growth;
pub mod linalg;
pub mod pipeline;
pub mod presets;
pub mod product;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod word;
pub mod xi;

pub use num_rational::BigRational;

pub use error::{Error, Result};
pub use factor::{green_factor, validate_factor, FactorChain, FactorResolventCache, ValidationReport};
pub use pipeline::{run_pipeline, AnalysisReport, Check, Command, RunConfig, SpecSource, Tolerances};
pub use presets::Preset;
pub use product::FreeProductSpec;
pub use report::{emit_report, Format};
pub use scalar::{Probability, Scalar};
pub use word::{Letter, Word};
pub use xi::{certify_transience, solve_xi, XiSolution};

/// `f64` factor chain.
pub type Chain = FactorChain<f64>;
/// `f64` free-product spec.
pub type Spec = FreeProductSpec<f64>;
/// Exactly represented factor chain, as produced by the config parser.
pub type ExactChain = FactorChain<BigRational>;
/// `f64` ξ solution.
pub type Xi = XiSolution<f64>;
