//! Monte Carlo estimators built from a [`SimRun`].

use serde::{Deserialize, Serialize};

use crate::exit_chain::ExitChainKernel;

use super::walk::SimRun;

/// Point estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub estimator: String,
    pub value: f64,
    pub stderr: f64,
    pub walkers: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl SimEstimate {
    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    /// `|value − target| / stderr`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.stderr
    }
}

/// All estimators of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimates {
    /// `‖X_n‖/n`.
    pub ell0: SimEstimate,
    /// Graph distance per step.
    pub ell1: SimEstimate,
    /// `l(X_n)/n` with the `L`-based letter lengths.
    pub ell: Option<SimEstimate>,
    /// `−log F`-based length per step.
    pub ell_f: Option<SimEstimate>,
    /// Exit-letter log-likelihood rate.
    pub h_q: Option<SimEstimate>,
    /// Observed exit transitions per source type.
    pub exit_transitions: Vec<u64>,
    /// Total-variation distance between empirical and analytic exit kernels,
    /// per source type.
    pub exit_tv: Vec<f64>,
}

impl SimEstimates {
    pub fn all(&self) -> Vec<&SimEstimate> {
        let mut v = vec![&self.ell0, &self.ell1];
        v.extend(self.ell.as_ref());
        v.extend(self.ell_f.as_ref());
        v.extend(self.h_q.as_ref());
        v
    }
}

/// Mean and standard error `sd/√m` of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Estimators of a run; the length-based ones need the exit kernel.
pub fn estimate_drifts(run: &SimRun, kernel: Option<&ExitChainKernel<f64>>) -> SimEstimates {
    let p = run.params;
    let make = |name: &str, xs: Vec<f64>| {
        let (value, stderr) = mean_stderr(&xs);
        SimEstimate {
            estimator: name.to_string(),
            value,
            stderr,
            walkers: xs.len(),
            horizon: p.horizon,
            seed: p.seed,
        }
    };
    let make_opt = |name: &str, xs: Vec<f64>| (xs.len() >= 2).then(|| make(name, xs));
    let s = &run.summaries;
    let ell0 = make("ell0", s.iter().map(|w| w.block).collect());
    let ell1 = make("ell1", s.iter().map(|w| w.metric).collect());
    let Some(kernel) = kernel else {
        return SimEstimates {
            ell0,
            ell1,
            ell: None,
            ell_f: None,
            h_q: None,
            exit_transitions: Vec::new(),
            exit_tv: Vec::new(),
        };
    };
    let r = kernel.rank();
    let mut exit_transitions = vec![0u64; r];
    let mut exit_tv = vec![0.0; r];
    for i in 0..r {
        let total: u64 = run.exit_counts[i].iter().flatten().sum();
        exit_transitions[i] = total;
        let mut tv = 0.0;
        for j in (0..r).filter(|&j| j != i) {
            for (h, &c) in run.exit_counts[i][j].iter().enumerate() {
                let emp = if total == 0 { 0.0 } else { c as f64 / total as f64 };
                tv += (emp - kernel.q(i, j, h)).abs();
            }
        }
        exit_tv[i] = 0.5 * tv;
    }
    SimEstimates {
        ell0,
        ell1,
        ell: make_opt("ell", s.iter().map(|w| w.l_length).collect()),
        ell_f: make_opt("ell_f", s.iter().map(|w| w.f_length).collect()),
        h_q: make_opt("h_q", s.iter().filter_map(|w| w.exit_rate).collect()),
        exit_transitions,
        exit_tv,
    }
}

/// Fractions of paths with `|l(X_n)/n − h| > ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub horizon: usize,
    pub epsilons: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Binomial standard errors of the fractions.
    pub stderrs: Vec<f64>,
}

pub const CONCENTRATION_EPSILONS: [f64; 3] = [0.05, 0.02, 0.01];

pub fn concentration_check(run: &SimRun, h: f64, epsilons: &[f64]) -> Concentration {
    let m = run.summaries.len() as f64;
    let fractions: Vec<f64> = epsilons
        .iter()
        .map(|&e| run.summaries.iter().filter(|w| (w.l_length - h).abs() > e).count() as f64 / m)
        .collect();
    let stderrs = fractions.iter().map(|&f| (f * (1.0 - f) / m).sqrt()).collect();
    Concentration {
        horizon: run.params.horizon,
        epsilons: epsilons.to_vec(),
        fractions,
        stderrs,
    }
}

/// Whether the longer run's deviation fractions do not exceed the shorter
/// run's by more than two joint standard errors.
pub fn concentration_is_directional(short: &Concentration, long: &Concentration) -> bool {
    short
        .fractions
        .iter()
        .zip(&long.fractions)
        .zip(short.stderrs.iter().zip(&long.stderrs))
        .all(|((&a, &b), (&sa, &sb))| b <= a + 2.0 * (sa * sa + sb * sb).sqrt())
}

/// CSV rows `estimator,value,stderr,walkers,horizon,seed`.
pub fn estimates_csv(est: &SimEstimates) -> String {
    let mut out = String::from("estimator,value,stderr,walkers,horizon,seed\n");
    for e in est.all() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.estimator, e.value, e.stderr, e.walkers, e.horizon, e.seed
        ));
    }
    out
}
