//! The free product of a family of factors together with mixing weights.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{validate_factor, FactorChain, ValidationReport};
use crate::scalar::{to_f64, Probability};

/// Tolerance on `Σ α_i = 1`.
pub const ALPHA_SUM_TOL: f64 = 1e-12;

/// Factors `V_1, …, V_r` and weights `α_i`; the walk moves in factor `i`
/// with probability `α_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeProductSpec<T> {
    pub factors: Vec<FactorChain<T>>,
    pub alphas: Vec<T>,
}

/// Validation outcome for a whole spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecValidation {
    pub factors: Vec<ValidationReport>,
    pub violations: Vec<String>,
}

impl SpecValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.factors.iter().all(ValidationReport::is_valid)
    }

    pub fn all_violations(&self) -> Vec<String> {
        let mut out = self.violations.clone();
        for f in &self.factors {
            out.extend(f.violations.iter().map(|v| format!("{}: {}", f.factor, v)));
        }
        out
    }
}

impl<T: Probability> FreeProductSpec<T> {
    /// Builds and validates a spec.
    pub fn new(factors: Vec<FactorChain<T>>, alphas: Vec<T>) -> Result<Self> {
        let spec = Self { factors, alphas };
        let report = spec.validate();
        if report.is_valid() {
            Ok(spec)
        } else {
            Err(Error::Validation(report.all_violations()))
        }
    }

    /// Builds a spec without validating it.
    pub fn new_unchecked(factors: Vec<FactorChain<T>>, alphas: Vec<T>) -> Self {
        Self { factors, alphas }
    }

    pub fn validate(&self) -> SpecValidation {
        let mut violations = Vec::new();
        let r = self.factors.len();
        if r < 2 {
            violations.push(format!("need at least 2 factors, got {r}"));
        }
        if self.alphas.len() != r {
            violations.push(format!("{} weights for {} factors", self.alphas.len(), r));
        }
        let zero = T::zero();
        let mut sum = T::zero();
        for (i, a) in self.alphas.iter().enumerate() {
            if !(*a > zero) {
                violations.push(format!("weight alpha_{} is not positive", i + 1));
            }
            sum = sum + a.clone();
        }
        if !((to_f64(&sum) - 1.0).abs() <= ALPHA_SUM_TOL) {
            violations.push(format!("weights sum to {}", to_f64(&sum)));
        }
        if r == 2 && self.factors.iter().all(|f| f.len() == 2) {
            violations.push("excluded case: two factors with two states each (recurrent)".into());
        }
        let mut seen = HashSet::new();
        for f in &self.factors {
            for l in &f.labels {
                if !seen.insert(l.as_str()) {
                    violations.push(format!("state label {l} used more than once"));
                }
            }
        }
        SpecValidation {
            factors: self.factors.iter().map(validate_factor).collect(),
            violations,
        }
    }
}

impl<T: Clone> FreeProductSpec<T> {
    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    /// Converts every probability into another numeric type.
    pub fn map<U: Clone, F: FnMut(&T) -> U>(&self, mut f: F) -> FreeProductSpec<U> {
        FreeProductSpec {
            factors: self.factors.iter().map(|c| c.map(&mut f)).collect(),
            alphas: self.alphas.iter().map(&mut f).collect(),
        }
    }

    /// Label of a letter, e.g. `g1`.
    pub fn letter_label(&self, factor: usize, state: usize) -> &str {
        &self.factors[factor].labels[state]
    }
}
