//! Exact small-horizon distributions of the free-product walk.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product::FreeProductSpec;
use crate::word::{Letter, Word};

/// Default cap on the number of distinct words held at once.
pub const ENUMERATION_LIMIT: usize = 10_000_000;

/// Exact law of `X_n` plus by-products of the enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub horizon: usize,
    pub probabilities: BTreeMap<Word, f64>,
    /// Words first reached at step `k`, `k = 0..=horizon`; equals the metric
    /// sphere sizes `|S₁(k)|`.
    pub first_reached: Vec<u128>,
    /// `E[−log π_n(X_n)]` for every `n ≤ horizon`.
    pub entropies: Vec<f64>,
}

impl ExactDistribution {
    pub fn total_mass(&self) -> f64 {
        self.probabilities.values().sum()
    }
}

/// Successor words with their probabilities.
pub fn transitions(spec: &FreeProductSpec<f64>, w: &Word) -> Vec<(Word, f64)> {
    let mut out = Vec::new();
    let top = w.0.last().copied();
    for (i, f) in spec.factors.iter().enumerate() {
        let a = spec.alphas[i];
        match top {
            Some(l) if l.factor() == i => {
                for y in f.successors(l.state()) {
                    let mut v = w.0.clone();
                    v.pop();
                    if y != 0 {
                        v.push(Letter::new(i, y));
                    }
                    out.push((Word(v), a * f.p(l.state(), y)));
                }
            }
            _ => {
                for y in f.successors(0) {
                    let mut v = w.0.clone();
                    v.push(Letter::new(i, y));
                    out.push((Word(v), a * f.p(0, y)));
                }
            }
        }
    }
    out
}

/// `p^{(n)}(o, ·)` by dynamic programming over words.
pub fn enumerate_distribution(spec: &FreeProductSpec<f64>, n: usize, limit: usize) -> Result<ExactDistribution> {
    let mut cur: BTreeMap<Word, f64> = BTreeMap::from([(Word::root(), 1.0)]);
    let mut seen: BTreeSet<Word> = BTreeSet::from([Word::root()]);
    let mut first_reached = vec![1u128];
    let mut entropies = vec![0.0];
    for _ in 0..n {
        let mut next: BTreeMap<Word, f64> = BTreeMap::new();
        for (w, p) in &cur {
            for (v, q) in transitions(spec, w) {
                *next.entry(v).or_default() += p * q;
            }
        }
        if next.len() > limit || seen.len() > limit {
            return Err(Error::StateSpaceExplosion {
                reached: next.len().max(seen.len()),
                limit,
            });
        }
        let mut fresh = 0u128;
        for w in next.keys() {
            if seen.insert(w.clone()) {
                fresh += 1;
            }
        }
        first_reached.push(fresh);
        entropies.push(
            -next
                .values()
                .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
                .sum::<f64>(),
        );
        cur = next;
    }
    Ok(ExactDistribution {
        horizon: n,
        probabilities: cur,
        first_reached,
        entropies,
    })
}

/// `p^{(n)}(o,o)` for `n = 0..=n_max`.
///
/// Words that cannot return to the root in the remaining steps are dropped:
/// the return distance of a word is the sum over its letters of the directed
/// distance back to the factor root.
pub fn return_probabilities(spec: &FreeProductSpec<f64>, n_max: usize, limit: usize) -> Result<Vec<f64>> {
    let back: Vec<Vec<usize>> = spec
        .factors
        .iter()
        .map(|f| {
            f.distances_to_root()
                .into_iter()
                .map(|d| d.unwrap_or(usize::MAX / 4))
                .collect()
        })
        .collect();
    let distance = |w: &Word| -> usize { w.letters().iter().map(|l| back[l.factor()][l.state()]).sum() };
    let mut cur: BTreeMap<Word, f64> = BTreeMap::from([(Word::root(), 1.0)]);
    let mut out = vec![1.0];
    for t in 1..=n_max {
        let remaining = n_max - t;
        let mut next: BTreeMap<Word, f64> = BTreeMap::new();
        for (w, p) in &cur {
            for (v, q) in transitions(spec, w) {
                if distance(&v) <= remaining {
                    *next.entry(v).or_default() += p * q;
                }
            }
        }
        if next.len() > limit {
            return Err(Error::StateSpaceExplosion {
                reached: next.len(),
                limit,
            });
        }
        out.push(next.get(&Word::root()).copied().unwrap_or(0.0));
        cur = next;
    }
    Ok(out)
}

/// Smallest `N` with `z^{N+1}/(1−z) < tol`, which bounds the tail of the
/// Green series at the root.
pub fn certified_horizon(z: f64, tol: f64) -> usize {
    (0..).find(|&n| z.powi(n as i32 + 1) / (1.0 - z) < tol).expect("z < 1")
}

/// Total-variation distance between an exact law and an empirical histogram.
pub fn total_variation(exact: &BTreeMap<Word, f64>, counts: &BTreeMap<Word, u64>) -> f64 {
    let total: u64 = counts.values().sum();
    let mut tv = 0.0;
    for (w, &p) in exact {
        let q = counts.get(w).copied().unwrap_or(0) as f64 / total as f64;
        tv += (p - q).abs();
    }
    for (w, &c) in counts {
        if !exact.contains_key(w) {
            tv += c as f64 / total as f64;
        }
    }
    0.5 * tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn zero_steps_is_the_root() {
        let d = enumerate_distribution(&presets::two_factor_example(), 0, ENUMERATION_LIMIT).unwrap();
        assert_eq!(d.probabilities.len(), 1);
        assert_eq!(d.probabilities[&Word::root()], 1.0);
    }

    #[test]
    fn two_step_return_by_hand() {
        // neither factor returns in two steps, so p^{(2)}(o,o) = 0
        let spec = presets::two_factor_example();
        let d = enumerate_distribution(&spec, 2, ENUMERATION_LIMIT).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(d.probabilities.get(&Word::root()).copied().unwrap_or(0.0), 0.0);
        // three steps: o1→g1→g2→o1 and o2→h1→h2→o2, each α³ · 1 · 1 · 1/2
        let d3 = enumerate_distribution(&spec, 3, ENUMERATION_LIMIT).unwrap();
        assert!((d3.probabilities[&Word::root()] - 2.0 * 0.125 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn pruned_returns_agree_with_full_enumeration() {
        let spec = presets::two_factor_example();
        let full = enumerate_distribution(&spec, 8, ENUMERATION_LIMIT).unwrap();
        let pruned = return_probabilities(&spec, 8, ENUMERATION_LIMIT).unwrap();
        let p8 = full.probabilities.get(&Word::root()).copied().unwrap_or(0.0);
        assert!((pruned[8] - p8).abs() < 1e-15);
    }

    #[test]
    fn guard_triggers() {
        let spec = presets::two_factor_example();
        assert!(matches!(
            enumerate_distribution(&spec, 6, 10),
            Err(Error::StateSpaceExplosion { .. })
        ));
    }

    #[test]
    fn certified_horizon_at_half() {
        let n = certified_horizon(0.5, 1e-9);
        assert!(0.5f64.powi(n as i32 + 1) / 0.5 < 1e-9);
        assert!(0.5f64.powi(n as i32) / 0.5 >= 1e-9);
    }
}
