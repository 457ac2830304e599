//! The coupled fixed-point system for the factor arguments `ξ_i(z)`.
//!
//! For a free product the Green functions of the big walk restricted to
//! factor `i` are the factor Green functions evaluated at `ξ_i(z)`, where
//!
//! ```text
//! ξ_i = Φ_i(z, ξ) = α_i z / (1 − z Σ_{j≠i} α_j A_j(ξ_j)),
//! A_j(w) = Σ_s p_j(o_j, s) F_j(s, o_j | w).
//! ```
//!
//! `Φ` is coordinatewise increasing on `[0,1)^r`, so iterating from
//! `ξ^{(0)} = α z` increases monotonically to the smallest solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{green_factor, FactorChain, FactorResolventCache};
use crate::linalg::{solve, DenseMatrix};
use crate::product::FreeProductSpec;
use crate::scalar::{lit, to_f64, Scalar};

/// Iteration controls for [`solve_xi_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiOptions {
    /// Stop when the max coordinate change drops below this.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Required fixed-point residual of the returned solution.
    pub residual_tol: f64,
}

impl Default for XiOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-14,
            max_iter: 1_000_000,
            residual_tol: 1e-12,
        }
    }
}

/// Solved `ξ_i(z)` with derivatives and the factor resolvents at `ξ_i`.
#[derive(Debug, Clone)]
pub struct XiSolution<T> {
    pub z: T,
    pub xi: Vec<T>,
    /// `dξ_i/dz` at `z`, from implicit differentiation.
    pub xi_prime: Vec<T>,
    /// `|ξ_i − Φ_i(z, ξ)|`.
    pub residuals: Vec<T>,
    pub iterations: usize,
    /// Resolvent of factor `i` at argument `ξ_i`.
    pub caches: Vec<FactorResolventCache<T>>,
}

impl<T: Scalar> XiSolution<T> {
    pub fn xi_min(&self) -> T {
        self.xi.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn xi_max(&self) -> T {
        self.xi.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_residual(&self) -> T {
        self.residuals.iter().copied().fold(T::zero(), T::max)
    }

    /// `H̄_i(z) = 1 − α_i z / ξ_i`.
    pub fn h_bar(&self, alphas: &[T], i: usize) -> T {
        T::one() - alphas[i] * self.z / self.xi[i]
    }

    /// `G_i(o_i,o_i|ξ_i)`.
    pub fn root_green(&self, i: usize) -> T {
        self.caches[i].green(0, 0)
    }
}

/// `A_j(w) = Σ_s p_j(o_j,s) F_j(s,o_j|w)` and its derivative in `w`.
pub(crate) fn return_weight<T: Scalar>(chain: &FactorChain<T>, cache: &FactorResolventCache<T>) -> (T, T) {
    let mut a = T::zero();
    let mut da = T::zero();
    for s in chain.successors(0) {
        let p = *chain.p(0, s);
        a = a + p * cache.first_visit(s, 0);
        da = da + p * cache.first_visit_dz(s, 0);
    }
    (a, da)
}

fn caches_at<T: Scalar>(spec: &FreeProductSpec<T>, xi: &[T]) -> Result<Vec<FactorResolventCache<T>>> {
    spec.factors.iter().zip(xi).map(|(f, &w)| green_factor(f, w)).collect()
}

/// One application of `Φ(z, ·)`. Fails if a denominator is not positive.
fn phi<T: Scalar>(spec: &FreeProductSpec<T>, z: T, weights: &[T]) -> Option<Vec<T>> {
    let total: T = spec.alphas.iter().zip(weights).map(|(&a, &w)| a * w).sum();
    spec.alphas
        .iter()
        .zip(weights)
        .map(|(&alpha, &own)| {
            let denom = T::one() - z * (total - alpha * own);
            (denom > T::zero()).then(|| alpha * z / denom)
        })
        .collect()
}

fn return_weights<T: Scalar>(spec: &FreeProductSpec<T>, caches: &[FactorResolventCache<T>]) -> Vec<T> {
    spec.factors
        .iter()
        .zip(caches)
        .map(|(f, c)| return_weight(f, c).0)
        .collect()
}

/// One application `Φ(z, ξ)` of the fixed-point map.
pub fn apply_phi<T: Scalar>(spec: &FreeProductSpec<T>, z: T, xi: &[T]) -> Result<Vec<T>> {
    let caches = caches_at(spec, xi)?;
    phi(spec, z, &return_weights(spec, &caches)).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })
}

/// Solves `ξ = Φ(z, ξ)` starting from `ξ^{(0)} = α z`.
pub fn solve_xi<T: Scalar>(spec: &FreeProductSpec<T>, z: T) -> Result<XiSolution<T>> {
    solve_xi_with(spec, z, None, &XiOptions::default())
}

/// Solves `ξ = Φ(z, ξ)` from an optional warm start, which must lie below
/// the solution (e.g. the solution at a smaller `z`).
pub fn solve_xi_with<T: Scalar>(
    spec: &FreeProductSpec<T>,
    z: T,
    start: Option<&[T]>,
    opts: &XiOptions,
) -> Result<XiSolution<T>> {
    let r = spec.rank();
    let mut xi: Vec<T> = match start {
        Some(s) => s.to_vec(),
        None => spec.alphas.iter().map(|&a| a * z).collect(),
    };
    let step_tol = lit::<T>(opts.step_tol);
    let mut last_change = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let caches = caches_at(spec, &xi).map_err(|_| Error::NoConvergence {
            iterations,
            residual: to_f64(&last_change),
        })?;
        let next = phi(spec, z, &return_weights(spec, &caches)).ok_or(Error::NoConvergence {
            iterations,
            residual: to_f64(&last_change),
        })?;
        if next.iter().any(|&x| !(x < T::one())) {
            return Err(Error::NoConvergence {
                iterations,
                residual: to_f64(&last_change),
            });
        }
        last_change = next
            .iter()
            .zip(&xi)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        xi = next;
        if last_change < step_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            residual: to_f64(&last_change),
        });
    }
    let caches = caches_at(spec, &xi)?;
    let image = phi(spec, z, &return_weights(spec, &caches)).ok_or(Error::NoConvergence {
        iterations,
        residual: to_f64(&last_change),
    })?;
    let residuals: Vec<T> = image.iter().zip(&xi).map(|(&a, &b)| (a - b).abs()).collect();
    let worst = residuals.iter().copied().fold(T::zero(), T::max);
    if !(worst <= lit::<T>(opts.residual_tol)) {
        return Err(Error::NoConvergence {
            iterations,
            residual: to_f64(&worst),
        });
    }
    debug_assert_eq!(xi.len(), r);
    let mut sol = XiSolution {
        z,
        xi,
        xi_prime: vec![T::zero(); r],
        residuals,
        iterations,
        caches,
    };
    sol.xi_prime = xi_derivative(spec, &sol)?;
    Ok(sol)
}

/// `dξ/dz` by implicit differentiation: `(I − ∂Φ/∂ξ) ξ' = ∂Φ/∂z`.
pub fn xi_derivative<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>) -> Result<Vec<T>> {
    let r = spec.rank();
    let z = sol.z;
    let (a, da): (Vec<T>, Vec<T>) = spec
        .factors
        .iter()
        .zip(&sol.caches)
        .map(|(f, c)| return_weight(f, c))
        .unzip();
    let mut jac = DenseMatrix::identity(r);
    let mut rhs = vec![T::zero(); r];
    for i in 0..r {
        let s: T = (0..r).filter(|&j| j != i).map(|j| spec.alphas[j] * a[j]).sum();
        let d = T::one() - z * s;
        let d2 = d * d;
        rhs[i] = spec.alphas[i] / d2;
        for j in (0..r).filter(|&j| j != i) {
            let dphi = spec.alphas[i] * z * z * spec.alphas[j] * da[j] / d2;
            jac[(i, j)] = -dphi;
        }
    }
    solve(&jac, &rhs).ok_or(Error::SingularJacobian { z: to_f64(&z) })
}

/// `B_j(w) = 1/((1−w) G_j(o_j,o_j|w)) − 1`, which equals `Σ_{h≠o_j} L_j(o_j,h|w)`.
pub(crate) fn exit_mass<T: Scalar>(w: T, cache: &FactorResolventCache<T>) -> T {
    T::one() / ((T::one() - w) * cache.green(0, 0)) - T::one()
}

/// `dB_j/dw`.
pub(crate) fn exit_mass_dw<T: Scalar>(w: T, cache: &FactorResolventCache<T>) -> T {
    let g = cache.green(0, 0);
    let dg = cache.green_dz(0, 0);
    let one_minus = T::one() - w;
    (g - one_minus * dg) / (one_minus * one_minus * g * g)
}

/// `γ_{i,j}(z) = (1/α_i)(ξ_i/ξ_j) B_j(ξ_j)` at the solution's `z`.
pub fn gamma<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>, i: usize, j: usize) -> T {
    assert_ne!(i, j, "gamma is defined for distinct factors");
    let (xi, xj) = (sol.xi[i], sol.xi[j]);
    xi / (spec.alphas[i] * xj) * exit_mass(xj, &sol.caches[j])
}

/// `γ_{i,j}'(z)` by the chain rule through `ξ'` and `G_j'`.
pub fn gamma_prime<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>, i: usize, j: usize) -> T {
    assert_ne!(i, j, "gamma is defined for distinct factors");
    let (xi, xj) = (sol.xi[i], sol.xi[j]);
    let (dxi, dxj) = (sol.xi_prime[i], sol.xi_prime[j]);
    let b = exit_mass(xj, &sol.caches[j]);
    let db = exit_mass_dw(xj, &sol.caches[j]);
    let ratio_d = (dxi * xj - xi * dxj) / (xj * xj);
    (ratio_d * b + xi / xj * db * dxj) / spec.alphas[i]
}

/// Uniform upper bound on the diagonal Green function `G(x,x|z)` of the
/// free-product walk over all words `x`.
///
/// From `x`, a step into a factor `m` other than the type of the last letter
/// pushes a fresh letter, which returns with weight `A_m(ξ_m)`. Every other
/// step returns with weight at most 1, so
/// `U(x,x|z) ≤ z (1 − min_τ Σ_{m≠τ} α_m (1 − A_m(ξ_m)))`.
pub fn diagonal_green_bound<T: Scalar>(spec: &FreeProductSpec<T>, sol: &XiSolution<T>) -> T {
    let escape: Vec<T> = spec
        .factors
        .iter()
        .zip(&sol.caches)
        .zip(&spec.alphas)
        .map(|((f, c), &a)| a * (T::one() - return_weight(f, c).0))
        .collect();
    let total: T = escape.iter().copied().sum();
    let worst = escape.iter().map(|&e| total - e).fold(T::infinity(), T::min);
    T::one() / (T::one() - sol.z * (T::one() - worst))
}

/// Default continuation offset for the transience certificate.
pub const TRANSIENCE_DELTA: f64 = 1e-3;

/// Certifies `R > 1` numerically: continues the solution from `z = 1` to
/// `z = 1 + δ` in 10 warm-started steps and returns `1 + δ` if every step
/// converges with all `ξ_i < 1`.
pub fn certify_transience<T: Scalar>(spec: &FreeProductSpec<T>, delta: T) -> Result<T> {
    let opts = XiOptions::default();
    let gate = |z: T, e: Error| Error::TransienceGateFailed {
        z: to_f64(&z),
        reason: e.to_string(),
    };
    let base = solve_xi_with(spec, T::one(), None, &opts).map_err(|e| gate(T::one(), e))?;
    let steps = 10;
    let mut xi = base.xi;
    for k in 1..=steps {
        let z = T::one() + delta * lit::<T>(k as f64 / steps as f64);
        let sol = solve_xi_with(spec, z, Some(&xi), &opts).map_err(|e| gate(z, e))?;
        xi = sol.xi;
    }
    Ok(T::one() + delta)
}

/// Green function of the free-product walk at the root,
/// `G(o,o|z) = 1 / (1 − z Σ_i α_i A_i(ξ_i(z)))`.
pub fn free_product_root_green<T: Scalar>(spec: &FreeProductSpec<T>, z: T) -> Result<T> {
    let sol = solve_xi(spec, z)?;
    let u: T = spec
        .factors
        .iter()
        .zip(&sol.caches)
        .zip(&spec.alphas)
        .map(|((f, c), &a)| a * return_weight(f, c).0)
        .sum::<T>()
        * z;
    Ok(T::one() / (T::one() - u))
}
