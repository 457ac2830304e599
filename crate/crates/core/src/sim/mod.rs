//! Monte Carlo simulation of the free-product walk and exact small-horizon
//! oracles.

pub mod enumerate;
pub mod estimates;
pub mod walk;

pub use enumerate::{
    certified_horizon, enumerate_distribution, return_probabilities, total_variation, ExactDistribution,
    ENUMERATION_LIMIT,
};
pub use estimates::{
    concentration_check, concentration_is_directional, estimate_drifts, estimates_csv, mean_stderr, Concentration,
    SimEstimate, SimEstimates, CONCENTRATION_EPSILONS,
};
pub use walk::{
    empirical_distribution, run_walkers, walker_rng, LetterWeights, PathRecord, SimParams, SimRun, Stepper,
    WalkerSummary, CHUNK, EXIT_BURN_IN, EXIT_MARGIN,
};
