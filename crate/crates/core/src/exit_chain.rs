//! The letter-type chain, the exit-letter chain, the block rate of escape
//! `ℓ₀`, the letter length function and the constant `C_h`.
//!
//! The exit-letter kernel does not depend on the source letter, only on its
//! type, so it is stored as one target distribution per ordered pair of
//! factors `i → j` and the full kernel over `𝓐 = {(g,i)}` is never built.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix};
use crate::product::FreeProductSpec;
use crate::scalar::{lit, to_f64, Scalar};
use crate::word::Word;
use crate::xi::{exit_mass, gamma_prime, XiSolution};

/// Stationarity and row-sum residuals must stay below this.
pub const CHAIN_TOL: f64 = 1e-10;

/// The Markov chain of letter types `τ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeChain<T> {
    pub q_hat: DenseMatrix<T>,
    /// Stationary vector from the closed form.
    pub nu: Vec<T>,
    /// Stationary vector from a dense linear solve.
    pub nu_solved: Vec<T>,
    pub row_residual: T,
    pub stationarity_residual: T,
    /// Max gap between the two stationary vectors.
    pub nu_gap: T,
}

/// Exit-letter chain `(W̃_k, τ_k)`.
///
/// Vectors indexed by a factor state carry a zero at the root index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitChainKernel<T> {
    /// `targets[i][j][h] = q((∗,i),(h,j))`; empty for `i = j`.
    pub targets: Vec<Vec<Vec<T>>>,
    pub nu: Vec<T>,
    /// `pi[i][g] = π(g,i)`.
    pub pi: Vec<Vec<T>>,
    /// `lengths[i][g] = −log L_i(o_i,g|ξ_i)`.
    pub lengths: Vec<Vec<T>>,
    pub row_residual: T,
    pub stationarity_residual: T,
    /// Max gap between `Σ_h q((∗,i),(h,j))` and `q̂(i,j)`.
    pub type_gap: T,
}

impl<T: Scalar> ExitChainKernel<T> {
    pub fn rank(&self) -> usize {
        self.nu.len()
    }

    /// `q((g,i),(h,j))`, zero for `i = j`.
    pub fn q(&self, i: usize, j: usize, h: usize) -> T {
        if i == j {
            T::zero()
        } else {
            self.targets[i][j][h]
        }
    }

    /// Length `l(v)` of a single letter of factor `i`.
    pub fn letter_length(&self, i: usize, g: usize) -> T {
        self.lengths[i][g]
    }
}

/// `(α_j/α_i)(ξ_i/ξ_j)((1−ξ_j)/(1−ξ_i))`, the common prefactor of `q̂` and `q`.
fn transfer<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>, i: usize, j: usize) -> T {
    let (ai, aj) = (spec.alphas[i], spec.alphas[j]);
    let (xi, xj) = (sol.xi[i], sol.xi[j]);
    aj / ai * (xi / xj) * ((T::one() - xj) / (T::one() - xi))
}

fn stationary_by_solve<T: Scalar>(q: &DenseMatrix<T>) -> Option<Vec<T>> {
    let r = q.rows();
    let mut a = q.transpose().sub(&DenseMatrix::identity(r));
    let mut b = vec![T::zero(); r];
    for j in 0..r {
        a[(r - 1, j)] = T::one();
    }
    b[r - 1] = T::one();
    solve(&a, &b)
}

/// Builds `q̂` and its stationary vector `ν`.
pub fn build_type_chain<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>) -> Result<TypeChain<T>> {
    let r = spec.rank();
    let mut q_hat = DenseMatrix::zeros(r, r);
    let b: Vec<T> = (0..r).map(|j| exit_mass(sol.xi[j], &sol.caches[j])).collect();
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            q_hat[(i, j)] = transfer(spec, sol, i, j) * b[j];
        }
    }
    // ν(i) ∝ α_i (1−ξ_i)/ξ_i · (1 − (1−ξ_i) G_i(o_i,o_i|ξ_i))
    let raw: Vec<T> = (0..r)
        .map(|i| {
            let x = sol.xi[i];
            let g = sol.root_green(i);
            spec.alphas[i] * (T::one() - x) / x * (T::one() - (T::one() - x) * g)
        })
        .collect();
    let c: T = raw.iter().copied().sum();
    let nu: Vec<T> = raw.iter().map(|&v| v / c).collect();

    let row_residual = (0..r)
        .map(|i| (q_hat.row(i).iter().copied().sum::<T>() - T::one()).abs())
        .fold(T::zero(), T::max);
    let image = q_hat.vecmat(&nu);
    let stationarity_residual = image
        .iter()
        .zip(&nu)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    let nu_solved = stationary_by_solve(&q_hat).ok_or(Error::StationarityResidual {
        what: "type chain (singular system)",
        residual: f64::INFINITY,
    })?;
    let nu_gap = nu
        .iter()
        .zip(&nu_solved)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    let tol = lit::<T>(CHAIN_TOL);
    let worst = row_residual.max(stationarity_residual).max(nu_gap);
    if !(worst <= tol) || nu.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::StationarityResidual {
            what: "type chain",
            residual: to_f64(&worst),
        });
    }
    Ok(TypeChain {
        q_hat,
        nu,
        nu_solved,
        row_residual,
        stationarity_residual,
        nu_gap,
    })
}

/// Builds the exit-letter kernel `q`, its stationary measure `π` and the
/// letter lengths.
pub fn build_exit_chain<T: Scalar>(
    spec: &FreeProductSpec<T>,
    sol: &XiSolution<T>,
    tc: &TypeChain<T>,
) -> Result<ExitChainKernel<T>> {
    let r = spec.rank();
    let sizes: Vec<usize> = spec.factors.iter().map(|f| f.len()).collect();
    let last: Vec<Vec<T>> = (0..r)
        .map(|j| {
            (0..sizes[j])
                .map(|h| {
                    if h == 0 {
                        T::zero()
                    } else {
                        sol.caches[j].last_visit(0, h)
                    }
                })
                .collect()
        })
        .collect();
    let mut targets = vec![vec![Vec::new(); r]; r];
    let mut row_residual = T::zero();
    let mut type_gap = T::zero();
    for i in 0..r {
        let mut row_sum = T::zero();
        for j in (0..r).filter(|&j| j != i) {
            let t = transfer(spec, sol, i, j);
            let dist: Vec<T> = last[j].iter().map(|&l| t * l).collect();
            let mass: T = dist.iter().copied().sum();
            type_gap = type_gap.max((mass - tc.q_hat[(i, j)]).abs());
            row_sum = row_sum + mass;
            targets[i][j] = dist;
        }
        row_residual = row_residual.max((row_sum - T::one()).abs());
    }
    let pi: Vec<Vec<T>> = (0..r)
        .map(|i| {
            (0..sizes[i])
                .map(|g| (0..r).filter(|&j| j != i).map(|j| tc.nu[j] * targets[j][i][g]).sum())
                .collect()
        })
        .collect();
    // π q = π: the mass of π on type i is what feeds q_{i→·}.
    let mass: Vec<T> = pi.iter().map(|p| p.iter().copied().sum()).collect();
    let mut stationarity_residual = T::zero();
    let mut total = T::zero();
    for j in 0..r {
        for h in 1..sizes[j] {
            let image: T = (0..r).filter(|&i| i != j).map(|i| mass[i] * targets[i][j][h]).sum();
            stationarity_residual = stationarity_residual.max((image - pi[j][h]).abs());
            total = total + pi[j][h];
        }
    }
    stationarity_residual = stationarity_residual.max((total - T::one()).abs());
    let lengths = last
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(h, &l)| if h == 0 { T::zero() } else { -l.ln() })
                .collect()
        })
        .collect();
    let tol = lit::<T>(CHAIN_TOL);
    let worst = row_residual.max(stationarity_residual).max(type_gap);
    if !(worst <= tol) {
        return Err(Error::StationarityResidual {
            what: "exit chain",
            residual: to_f64(&worst),
        });
    }
    Ok(ExitChainKernel {
        targets,
        nu: tc.nu.clone(),
        pi,
        lengths,
        row_residual,
        stationarity_residual,
        type_gap,
    })
}

/// `ℓ₀ = 1 / Σ_{i≠j} ν(i) α_j ((1−ξ_j)/(1−ξ_i)) γ'_{i,j}(1)`.
pub fn rate_of_escape_block<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>, tc: &TypeChain<T>) -> T {
    let r = spec.rank();
    let mut s = T::zero();
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            let w = spec.alphas[j] * (T::one() - sol.xi[j]) / (T::one() - sol.xi[i]);
            s = s + tc.nu[i] * w * gamma_prime(spec, sol, i, j);
        }
    }
    T::one() / s
}

/// `l(v_1…v_n) = Σ_k l(v_k)`.
pub fn length_of_word<T: Scalar>(kernel: &ExitChainKernel<T>, word: &Word) -> Result<T> {
    if !word.is_well_formed() {
        return Err(Error::MalformedWord(word.to_string()));
    }
    let r = kernel.rank();
    let mut total = T::zero();
    for l in word.letters() {
        let (f, s) = (l.factor(), l.state());
        if f >= r || s >= kernel.lengths[f].len() {
            return Err(Error::MalformedWord(format!("letter ({f},{s}) out of range")));
        }
        total = total + kernel.lengths[f][s];
    }
    Ok(total)
}

/// `C_h` by its closed formula and as `Σ l·π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChValue<T> {
    pub formula: T,
    pub via_pi: T,
    pub gap: T,
}

pub fn c_h<T: Scalar>(
    spec: &FreeProductSpec<T>,
    sol: &XiSolution<T>,
    tc: &TypeChain<T>,
    kernel: &ExitChainKernel<T>,
) -> ChValue<T> {
    let r = spec.rank();
    let mut formula = T::zero();
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            let t = tc.nu[i] * transfer(spec, sol, i, j);
            for g in 1..spec.factors[j].len() {
                let l = sol.caches[j].last_visit(0, g);
                formula = formula - l.ln() * t * l;
            }
        }
    }
    let via_pi = kernel
        .pi
        .iter()
        .zip(&kernel.lengths)
        .map(|(p, l)| p.iter().zip(l).map(|(&a, &b)| a * b).sum::<T>())
        .sum::<T>();
    ChValue {
        formula,
        via_pi,
        gap: (formula - via_pi).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::FactorChain;
    use crate::presets;
    use crate::word::Letter;
    use crate::xi::solve_xi;

    fn cycle(name: &str, n: usize) -> FactorChain<f64> {
        let rows = (0..n)
            .map(|x| (0..n).map(|y| if y == (x + 1) % n { 1.0 } else { 0.0 }).collect())
            .collect();
        FactorChain::from_rows(name, rows)
    }

    #[test]
    fn two_factors_force_alternating_types() {
        let spec = presets::two_factor_example();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        assert!((tc.q_hat[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((tc.q_hat[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((tc.nu[0] - 0.5).abs() < 1e-12 && (tc.nu[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_factors_give_uniform_nu() {
        let spec = FreeProductSpec::new(vec![cycle("a", 3), cycle("b", 3), cycle("c", 3)], vec![1.0 / 3.0; 3]).unwrap();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        for v in &tc.nu {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn example_rate_and_constant() {
        let spec = presets::two_factor_example();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        let k = build_exit_chain(&spec, &sol, &tc).unwrap();
        let l0 = rate_of_escape_block(&spec, &sol, &tc);
        assert!((l0 - 0.41563).abs() < 1e-4, "{l0}");
        let c = c_h(&spec, &sol, &tc, &k);
        assert!(c.gap < 1e-12);
        assert!((l0 * c.formula - 0.32005).abs() < 1e-4);
    }

    #[test]
    fn word_length_is_additive_and_checks_alternation() {
        let spec = presets::two_factor_example();
        let sol = solve_xi(&spec, 1.0).unwrap();
        let tc = build_type_chain(&spec, &sol).unwrap();
        let k = build_exit_chain(&spec, &sol, &tc).unwrap();
        assert_eq!(length_of_word(&k, &Word::root()).unwrap(), 0.0);
        let g = Letter::new(0, 2);
        let h = Letter::new(1, 3);
        let single = length_of_word(&k, &Word(vec![g])).unwrap();
        assert!((single + sol.caches[0].last_visit(0, 2).ln()).abs() < 1e-15);
        let two = length_of_word(&k, &Word(vec![g, h])).unwrap();
        assert!((two - single - k.letter_length(1, 3)).abs() < 1e-15);
        assert!(matches!(
            length_of_word(&k, &Word(vec![g, Letter::new(0, 1)])),
            Err(Error::MalformedWord(_))
        ));
    }
}
