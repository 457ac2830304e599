//! Entropy of random walks on free products of groups.
//!
//! For group factors the entropy has a closed form in terms of the
//! first-visit functions `F_i(e,g|ξ_i)` only:
//!
//! ```text
//! h = −Σ_i Σ_g α_i μ_i(g) (1−ϱ_i) [log F_i(g) + 𝓕_i(g)],   1 − ϱ_i = (1−ξ_i) G_i(e,e|ξ_i),
//! 𝓕_i(g) = Σ_{g'≠e} F_i(g') log(F_i(g g') / F_i(g')).
//! ```
//!
//! Infinite factors enumerate `Γ_i^×` in shells and supply a certified bound
//! on the part of the `𝓕` sums beyond a given shell.

pub mod finite;
pub mod zz2;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xi::XiOptions;

pub use finite::FiniteGroupFactor;
pub use zz2::{solve_zz2_xi, Zz2Eval, Zz2Factor};

/// A group factor with a step distribution `μ_i` on `Γ_i^×`.
pub trait GroupFactor {
    type Elem: Clone + PartialEq + Debug;
    type Eval: GroupEvaluation<Self::Elem>;

    fn name(&self) -> &str;
    fn identity(&self) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn inverse(&self, a: &Self::Elem) -> Self::Elem;
    /// Support of `μ_i` with probabilities.
    fn support(&self) -> Vec<(Self::Elem, f64)>;
    /// Generating functions at argument `w ∈ (0,1)`.
    fn evaluate(&self, w: f64) -> Result<Self::Eval>;

    /// Single-step entropy `−Σ μ log μ`.
    fn step_entropy(&self) -> f64 {
        -self
            .support()
            .iter()
            .map(|(_, p)| if *p > 0.0 { p * p.ln() } else { 0.0 })
            .sum::<f64>()
    }
}

/// Generating functions of one group factor at a fixed argument.
pub trait GroupEvaluation<E> {
    /// `G(e,e|w)`.
    fn root_green(&self) -> f64;
    /// `F(e,g|w)`, equal to 1 at the identity.
    fn first_visit(&self, g: &E) -> f64;
    /// Non-identity elements of shell `k ≥ 1`; shells partition `Γ^×`.
    fn shell(&self, k: usize) -> Vec<E>;
    /// Number of shells, `None` if infinite.
    fn shell_count(&self) -> Option<usize>;
    /// Upper bound on `Σ_{g' beyond shell n} F(g') |log(F(gg')/F(g'))|`,
    /// uniform over `g` in the support.
    fn tail_bound(&self, n: usize) -> f64;
    /// Upper bound on `Σ_{g' beyond shell n} F(g')`.
    fn mass_tail_bound(&self, n: usize) -> f64;
}

/// Default relative tolerance for the truncated sums.
pub const GROUP_REL_TOL: f64 = 1e-6;
/// Default cap on the number of shells.
pub const GROUP_MAX_SHELLS: usize = 200;

/// Result of [`entropy_groups`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntropyReport {
    pub h: f64,
    /// Shells summed.
    pub shells: usize,
    /// Certified bound on the truncation error of `h`.
    pub tail_bound: f64,
    /// `ϱ_i = 1 − (1−ξ_i) G_i(e,e|ξ_i)`.
    pub rho: Vec<f64>,
    /// `Σ_{g≠e} (1−ξ_i) G_i(e,g|ξ_i)` over the summed shells; tends to `ϱ_i`.
    pub first_letter_mass: Vec<f64>,
    /// Certified bound on the missing first-letter mass.
    pub first_letter_tail: Vec<f64>,
}

/// Entropy of the free product of group factors at the solved `ξ_i`.
///
/// Shells are added until the certified tail is below `rel_tol · |h|`; fails
/// with [`Error::TailBoundTooLoose`] if that needs more than `max_shells`.
pub fn entropy_groups<G: GroupFactor>(
    factors: &[G],
    alphas: &[f64],
    xi: &[f64],
    rel_tol: f64,
    max_shells: usize,
) -> Result<GroupEntropyReport> {
    let evals = factors
        .iter()
        .zip(xi)
        .map(|(f, &w)| f.evaluate(w))
        .collect::<Result<Vec<_>>>()?;
    let r = factors.len();
    let weight: Vec<f64> = (0..r).map(|i| (1.0 - xi[i]) * evals[i].root_green()).collect();
    let supports: Vec<Vec<(G::Elem, f64)>> = factors.iter().map(GroupFactor::support).collect();

    // first term and running 𝓕 sums, per factor and support element
    let mut h_first = 0.0;
    for i in 0..r {
        for (g, mu) in &supports[i] {
            h_first -= alphas[i] * mu * weight[i] * evals[i].first_visit(g).ln();
        }
    }
    let mut cal = vec![0.0; r];
    let mut mass = vec![0.0; r];
    let finite_limit = evals
        .iter()
        .map(|e| e.shell_count())
        .try_fold(0usize, |m, c| c.map(|c| m.max(c)));
    let mut shells = 0;
    let mut tail = f64::INFINITY;
    let mut h = h_first;
    while shells < max_shells {
        shells += 1;
        for i in 0..r {
            if evals[i].shell_count().is_some_and(|c| shells > c) {
                continue;
            }
            let elems = evals[i].shell(shells);
            for gp in &elems {
                let fgp = evals[i].first_visit(gp);
                mass[i] += weight[i] * fgp;
                for (g, mu) in &supports[i] {
                    let prod = factors[i].mul(g, gp);
                    let fprod = evals[i].first_visit(&prod);
                    cal[i] += alphas[i] * mu * fgp * (fprod / fgp).ln();
                }
            }
        }
        h = h_first - (0..r).map(|i| weight[i] * cal[i]).sum::<f64>();
        tail = (0..r)
            .map(|i| alphas[i] * weight[i] * evals[i].tail_bound(shells))
            .sum();
        let finished = finite_limit.is_some_and(|c| shells >= c);
        if finished || tail <= rel_tol * h.abs() {
            break;
        }
    }
    if !(tail <= rel_tol * h.abs()) {
        return Err(Error::TailBoundTooLoose {
            requested: rel_tol,
            achieved: tail / h.abs(),
        });
    }
    Ok(GroupEntropyReport {
        h,
        shells,
        tail_bound: tail,
        rho: weight.iter().map(|w| 1.0 - w).collect(),
        first_letter_mass: mass,
        first_letter_tail: (0..r).map(|i| weight[i] * evals[i].mass_tail_bound(shells)).collect(),
    })
}

/// `A_i(w) = Σ_g μ_i(g) F_i(e, g^{-1}|w)` for a group factor.
pub fn group_return_weight<G: GroupFactor>(factor: &G, w: f64) -> Result<f64> {
    let e = factor.evaluate(w)?;
    Ok(factor
        .support()
        .iter()
        .map(|(g, mu)| mu * e.first_visit(&factor.inverse(g)))
        .sum())
}

/// Solves `ξ_i = α_i / (1 − Σ_{j≠i} α_j A_j(ξ_j))` at `z = 1` by monotone
/// iteration from `ξ = α`.
pub fn solve_group_xi<G: GroupFactor>(factors: &[G], alphas: &[f64], opts: &XiOptions) -> Result<Vec<f64>> {
    let r = factors.len();
    let mut xi = alphas.to_vec();
    for it in 1..=opts.max_iter {
        let a = factors
            .iter()
            .zip(&xi)
            .map(|(f, &w)| group_return_weight(f, w))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = alphas.iter().zip(&a).map(|(x, y)| x * y).sum();
        let next: Vec<f64> = (0..r).map(|i| alphas[i] / (1.0 - (total - alphas[i] * a[i]))).collect();
        let step = next.iter().zip(&xi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if next.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: step,
            });
        }
        xi = next;
        if step < opts.step_tol {
            return Ok(xi);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::entropy_v1;
    use crate::exit_chain::{build_exit_chain, build_type_chain, c_h, rate_of_escape_block};
    use crate::product::FreeProductSpec;
    use crate::xi::solve_xi;

    #[test]
    fn cyclic_groups_match_generic_pipeline() {
        let factors = vec![
            FiniteGroupFactor::cyclic("p", 3, &[(1, 0.6), (2, 0.4)]),
            FiniteGroupFactor::cyclic("q", 4, &[(1, 0.5), (2, 0.2), (3, 0.3)]),
        ];
        let alphas = [0.45, 0.55];
        let spec = FreeProductSpec::new(
            factors.iter().map(FiniteGroupFactor::to_chain).collect(),
            alphas.to_vec(),
        )
        .unwrap();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        let k = build_exit_chain(&spec, &sol, &tc).unwrap();
        let l0 = rate_of_escape_block(&spec, &sol, &tc);
        let generic = entropy_v1(l0, c_h(&spec, &sol, &tc, &k).formula);

        let xi = solve_group_xi(&factors, &alphas, &XiOptions::default()).unwrap();
        for (a, b) in xi.iter().zip(&sol.xi) {
            assert!((a - b).abs() < 1e-12);
        }
        let rep = entropy_groups(&factors, &alphas, &xi, GROUP_REL_TOL, GROUP_MAX_SHELLS).unwrap();
        assert_eq!(rep.shells, 1);
        assert_eq!(rep.tail_bound, 0.0);
        assert!((rep.h - generic).abs() < 1e-8, "{} vs {}", rep.h, generic);
        for i in 0..2 {
            assert!(rep.rho[i] > 0.0 && rep.rho[i] < 1.0);
            assert!((rep.first_letter_mass[i] - rep.rho[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_entropy_of_uniform_support() {
        let f = FiniteGroupFactor::cyclic("p", 5, &[(1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25)]);
        assert!((f.step_entropy() - 4f64.ln()).abs() < 1e-15);
    }
}
