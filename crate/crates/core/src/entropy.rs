//! Asymptotic entropy by three independent routes:
//!
//! 1. `h = ℓ₀ · C_h` (drift of the letter length function),
//! 2. `h = ℓ₀ · h_Q` (entropy rate of the exit-letter chain),
//! 3. `h = (∂g/∂r)/(∂g/∂s)` from the double generating function of the
//!    length function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_chain::ExitChainKernel;
use crate::product::FreeProductSpec;
use crate::scalar::{lit, rel_gap, to_f64, xlogx, Scalar};
use crate::xi::XiSolution;

/// The three entropy values plus `h_Q` and their worst relative gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTriple<T> {
    pub h_v1: T,
    pub h_v2: T,
    pub h_v3: T,
    pub h_q: T,
    pub spread: T,
}

impl<T: Scalar> EntropyTriple<T> {
    pub fn new(h_v1: T, h_v2: T, h_v3: T, h_q: T) -> Self {
        let spread = rel_gap(h_v1, h_v2).max(rel_gap(h_v1, h_v3)).max(rel_gap(h_v2, h_v3));
        Self {
            h_v1,
            h_v2,
            h_v3,
            h_q,
            spread,
        }
    }

    pub fn all_positive(&self) -> bool {
        self.h_v1 > T::zero() && self.h_v2 > T::zero() && self.h_v3 > T::zero()
    }
}

/// Partial derivatives of the double generating function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgfDerivatives<T> {
    pub dg_dr: T,
    pub dg_ds: T,
}

/// `h = ℓ₀ · C_h`.
pub fn entropy_v1<T: Scalar>(ell0: T, c_h: T) -> T {
    ell0 * c_h
}

/// Entropy rate of the exit-letter chain, `h_Q = −Σ π(a) Σ_b q(a,b) log q(a,b)`.
pub fn exit_chain_entropy_rate<T: Scalar>(kernel: &ExitChainKernel<T>) -> T {
    let r = kernel.rank();
    let mut h = T::zero();
    for i in 0..r {
        let mass: T = kernel.pi[i].iter().copied().sum();
        let row: T = (0..r)
            .filter(|&j| j != i)
            .map(|j| kernel.targets[i][j].iter().map(|&q| xlogx(q)).sum::<T>())
            .sum();
        h = h - mass * row;
    }
    h
}

/// `(ℓ₀ · h_Q, h_Q)`.
pub fn entropy_v2<T: Scalar>(ell0: T, kernel: &ExitChainKernel<T>) -> (T, T) {
    let hq = exit_chain_entropy_rate(kernel);
    (ell0 * hq, hq)
}

/// `h = (∂g/∂r)/(∂g/∂s)` with
///
/// ```text
/// ∂g/∂r = −Σ_i G_i(1−ξ_i)² (Σ_x G_i(o_i,x) log G_i(o_i,x) − log G_i(o_i,o_i)/(1−ξ_i))
/// ∂g/∂s =  Σ_i ξ_i' (G_i(o_i,o_i) − (1−ξ_i) G_i'(o_i,o_i))
/// ```
/// where every `G_i` is evaluated at `ξ_i`.
pub fn entropy_v3<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>) -> Result<(T, DgfDerivatives<T>)> {
    let mut dg_dr = T::zero();
    let mut dg_ds = T::zero();
    for i in 0..spec.rank() {
        let c = &sol.caches[i];
        let x = sol.xi[i];
        let one_minus = T::one() - x;
        let g = c.green(0, 0);
        let s: T = (0..c.len()).map(|y| xlogx(c.green(0, y))).sum();
        dg_dr = dg_dr - g * one_minus * one_minus * (s - g.ln() / one_minus);
        dg_ds = dg_ds + sol.xi_prime[i] * (g - one_minus * c.green_dz(0, 0));
    }
    if !(dg_ds.abs() >= lit::<T>(1e-14)) {
        return Err(Error::DivisionNearZero {
            what: "dg/ds",
            value: to_f64(&dg_ds),
        });
    }
    Ok((dg_dr / dg_ds, DgfDerivatives { dg_dr, dg_ds }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exit_chain::{build_exit_chain, build_type_chain, c_h, rate_of_escape_block};
    use crate::presets;
    use crate::xi::solve_xi;

    #[test]
    fn example_three_routes_agree() {
        let spec = presets::two_factor_example();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        let k = build_exit_chain(&spec, &sol, &tc).unwrap();
        let l0 = rate_of_escape_block(&spec, &sol, &tc);
        let h1 = entropy_v1(l0, c_h(&spec, &sol, &tc, &k).formula);
        let (h2, _) = entropy_v2(l0, &k);
        let (h3, d) = entropy_v3(&spec, &sol).unwrap();
        let t = EntropyTriple::new(h1, h2, h3, 0.0);
        assert!(t.spread < 1e-6, "{t:?}");
        assert!((h1 - 0.32005).abs() < 1e-4);
        assert!(d.dg_dr.signum() == d.dg_ds.signum());
    }

    #[test]
    fn deterministic_kernel_has_zero_rate() {
        let k = ExitChainKernel {
            targets: vec![vec![vec![], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![]]],
            nu: vec![0.5, 0.5],
            pi: vec![vec![0.0, 0.5], vec![0.0, 0.5]],
            lengths: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            row_residual: 0.0,
            stationarity_residual: 0.0,
            type_gap: 0.0,
        };
        assert_eq!(exit_chain_entropy_rate(&k), 0.0);
    }

    #[test]
    fn example_in_f32() {
        let spec = presets::two_factor_example().map(|&p| p as f32);
        let opts = crate::xi::XiOptions {
            step_tol: 1e-7,
            max_iter: 100_000,
            residual_tol: 1e-5,
        };
        let sol = crate::xi::solve_xi_with(&spec, 1.0f32, None, &opts).unwrap();
        let (h, _) = entropy_v3(&spec, &sol).unwrap();
        assert!((h - 0.32005).abs() < 1e-3, "{h}");
    }
}
