//! Finite factor chains and their generating functions.
//!
//! A factor is a rooted Markov chain on a finite state set; state index `0`
//! is always the root. All generating functions of a factor at a real
//! argument `z` come from the resolvent `G(z) = (I − zP)^{-1}`:
//!
//! * first visit `F(x,y|z) = G(x,y|z) / G(y,y|z)`,
//! * last visit `L(x,y|z) = G(x,y|z) / G(x,x|z)`,
//! * first return `U(x,x|z) = 1 − 1/G(x,x|z)`,
//!
//! and `dG/dz = G P G`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::scalar::{lit, to_f64, Probability, Scalar};

/// Row-sum tolerance for stochasticity.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Residual tolerance of the resolvent solve, relative to `max(1, ‖G‖_∞)`.
pub const RESOLVENT_TOL: f64 = 1e-10;

/// One finite factor: labelled states (index 0 is the root) and a transition
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorChain<T> {
    pub name: String,
    pub labels: Vec<String>,
    transitions: DenseMatrix<T>,
}

impl<T: Clone> FactorChain<T> {
    /// Builds a factor without validating it; see [`validate_factor`].
    pub fn new(name: impl Into<String>, labels: Vec<String>, transitions: DenseMatrix<T>) -> Self {
        assert!(transitions.is_square(), "transition matrix must be square");
        assert_eq!(labels.len(), transitions.rows(), "one label per state");
        Self {
            name: name.into(),
            labels,
            transitions,
        }
    }

    /// Builds a factor with labels `<name>0, <name>1, ...`.
    pub fn from_rows(name: &str, rows: Vec<Vec<T>>) -> Self {
        let labels = (0..rows.len()).map(|i| format!("{name}{i}")).collect();
        Self::new(name, labels, DenseMatrix::from_rows(rows))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn p(&self, x: usize, y: usize) -> &T {
        &self.transitions[(x, y)]
    }

    pub fn transitions(&self) -> &DenseMatrix<T> {
        &self.transitions
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Converts the transition probabilities into another numeric type.
    pub fn map<U: Clone, F: FnMut(&T) -> U>(&self, f: F) -> FactorChain<U> {
        FactorChain {
            name: self.name.clone(),
            labels: self.labels.clone(),
            transitions: self.transitions.map(f),
        }
    }
}

impl<T: Probability> FactorChain<T> {
    /// Out-neighbours of `x` with positive probability, ascending by index.
    pub fn successors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        let zero = T::zero();
        self.transitions
            .row(x)
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p > zero)
            .map(|(y, _)| y)
    }

    /// Directed graph distances from the root (`None` when unreachable).
    pub fn root_distances(&self) -> Vec<Option<usize>> {
        self.bfs(0, false)
    }

    /// Directed graph distances from every state *to* the root.
    pub fn distances_to_root(&self) -> Vec<Option<usize>> {
        self.bfs(0, true)
    }

    fn bfs(&self, source: usize, reverse: bool) -> Vec<Option<usize>> {
        let n = self.len();
        let mut dist = vec![None; n];
        if n == 0 {
            return dist;
        }
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        let zero = T::zero();
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap_or(0);
            for y in 0..n {
                let edge = if reverse {
                    self.transitions[(y, x)] > zero
                } else {
                    self.transitions[(x, y)] > zero
                };
                if edge && dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }
}

/// Outcome of [`validate_factor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub factor: String,
    pub violations: Vec<String>,
    /// Uniform irreducibility constant `ε₀` (minimum positive transition).
    pub epsilon0: Option<f64>,
    /// Uniform irreducibility horizon `K`.
    pub horizon: Option<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the standing assumptions on a factor.
///
/// Works for any [`Probability`] type, so exact rational input is validated
/// exactly before conversion to floating point. For a finite chain every
/// positive transition is its own one-step witness, hence `K = 1` and `ε₀`
/// is the smallest positive entry.
pub fn validate_factor<T: Probability>(chain: &FactorChain<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let n = chain.len();
    if n < 2 {
        violations.push(format!("factor has {n} state(s); at least 2 required"));
    }
    let zero = T::zero();
    let mut min_positive: Option<T> = None;
    for x in 0..n {
        let mut sum = T::zero();
        for y in 0..n {
            let p = chain.p(x, y).clone();
            if p < zero {
                violations.push(format!(
                    "negative probability p({},{})",
                    chain.labels[x], chain.labels[y]
                ));
            }
            if p > zero {
                if x == y {
                    violations.push(format!("nonzero diagonal at state {}", chain.labels[x]));
                }
                min_positive = match min_positive {
                    Some(m) if m <= p => Some(m),
                    _ => Some(p.clone()),
                };
            }
            sum = sum + p;
        }
        let gap = (to_f64(&sum) - 1.0).abs();
        if !(gap <= ROW_SUM_TOL) {
            violations.push(format!(
                "not stochastic: row {} sums to {}",
                chain.labels[x],
                to_f64(&sum)
            ));
        }
    }
    for (x, d) in chain.root_distances().iter().enumerate() {
        if d.is_none() {
            violations.push(format!("state {} not reachable from the root", chain.labels[x]));
        }
    }
    let (epsilon0, horizon) = match &min_positive {
        Some(m) => (Some(to_f64(m)), Some(1)),
        None => (None, None),
    };
    ValidationReport {
        factor: chain.name.clone(),
        violations,
        epsilon0,
        horizon,
    }
}

/// Green matrix of one factor at a fixed argument, with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorResolventCache<T> {
    pub z: T,
    pub green: DenseMatrix<T>,
    pub green_dz: DenseMatrix<T>,
    /// `‖(I − zP) G − I‖_∞`.
    pub residual: T,
}

/// Computes `G(z) = (I − zP)^{-1}` and `G'(z) = G P G` by dense LU.
pub fn green_factor<T: Scalar>(chain: &FactorChain<T>, z: T) -> Result<FactorResolventCache<T>> {
    let n = chain.len();
    let singular = |reason: String| Error::SingularResolvent {
        factor: chain.name.clone(),
        z: to_f64(&z),
        reason,
    };
    if !(z >= T::zero()) {
        return Err(singular("negative or NaN argument".into()));
    }
    let p = chain.transitions();
    let m = DenseMatrix::identity(n).sub(&p.scale(z));
    let lu = Lu::factor(&m).ok_or_else(|| singular("I - zP is singular".into()))?;
    let green = lu.inverse();
    let residual = m.matmul(&green).sub(&DenseMatrix::identity(n)).norm_inf();
    let scale = green.norm_inf().max(T::one());
    // Narrow scalar types get a tolerance proportional to their epsilon.
    let tol = lit::<T>(RESOLVENT_TOL).max(T::epsilon() * lit(1e3 * n as f64));
    if !(residual <= tol * scale) {
        return Err(singular(format!("residual {} too large", residual)));
    }
    let neg_tol = tol * scale;
    for x in 0..n {
        for y in 0..n {
            if green[(x, y)] < -neg_tol {
                return Err(singular(format!("negative Green entry {}", green[(x, y)])));
            }
        }
    }
    let green_dz = green.matmul(p).matmul(&green);
    Ok(FactorResolventCache {
        z,
        green,
        green_dz,
        residual,
    })
}

impl<T: Scalar> FactorResolventCache<T> {
    pub fn len(&self) -> usize {
        self.green.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.green.rows() == 0
    }

    #[inline]
    pub fn green(&self, x: usize, y: usize) -> T {
        self.green[(x, y)]
    }

    #[inline]
    pub fn green_dz(&self, x: usize, y: usize) -> T {
        self.green_dz[(x, y)]
    }

    /// `F(x,y|z)`; equals 1 on the diagonal.
    pub fn first_visit(&self, x: usize, y: usize) -> T {
        if x == y {
            T::one()
        } else {
            self.green(x, y) / self.green(y, y)
        }
    }

    /// `L(x,y|z)`; equals 1 on the diagonal.
    pub fn last_visit(&self, x: usize, y: usize) -> T {
        if x == y {
            T::one()
        } else {
            self.green(x, y) / self.green(x, x)
        }
    }

    /// `U(x,x|z) = 1 − 1/G(x,x|z)`.
    pub fn first_return(&self, x: usize) -> T {
        T::one() - T::one() / self.green(x, x)
    }

    /// `d/dz F(x,y|z)` by the quotient rule on the resolvent derivative.
    pub fn first_visit_dz(&self, x: usize, y: usize) -> T {
        if x == y {
            return T::zero();
        }
        let gyy = self.green(y, y);
        (self.green_dz(x, y) * gyy - self.green(x, y) * self.green_dz(y, y)) / (gyy * gyy)
    }

    /// `d/dz L(x,y|z)`.
    pub fn last_visit_dz(&self, x: usize, y: usize) -> T {
        if x == y {
            return T::zero();
        }
        let gxx = self.green(x, x);
        (self.green_dz(x, y) * gxx - self.green(x, y) * self.green_dz(x, x)) / (gxx * gxx)
    }
}

/// Residuals of the standard identities of one factor's generating functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `‖(I − zP) G − I‖_∞`.
    pub resolvent: f64,
    /// `max_x |(1−z) Σ_y G(x,y) − 1|`.
    pub row_sum: f64,
    /// `max |G(x,y) − F(x,y) G(y,y)|` with `F` from the first-passage equations.
    pub factorization_first: f64,
    /// `max |L(x,y) − z p(x,y) − Σ_{w≠x} L(x,w) z p(w,y)|` (last-exit equations).
    pub factorization_last: f64,
    /// `|Σ_{h≠o} L(o,h) − (1/((1−z) G(o,o)) − 1)|`.
    pub sum_last_visit: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.resolvent,
            self.row_sum,
            self.factorization_first,
            self.factorization_last,
            self.sum_last_visit,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks the cached resolvent against independently solved identities.
///
/// `F(·,y)` solves `F(x,y) = z p(x,y) + Σ_{w≠y} z p(x,w) F(w,y)` by its own
/// linear system, so the factorization check does not reuse `G`.
pub fn identity_residuals<T: Scalar>(
    chain: &FactorChain<T>,
    cache: &FactorResolventCache<T>,
) -> Result<IdentityResiduals> {
    let n = chain.len();
    let z = cache.z;
    let p = chain.transitions();
    let mut row_sum = T::zero();
    for x in 0..n {
        let s: T = (0..n).map(|y| cache.green(x, y)).sum();
        row_sum = row_sum.max(((T::one() - z) * s - T::one()).abs());
    }
    let mut fact_first = T::zero();
    for y in 0..n {
        // unknowns F(x,y) for all x; column y of zP is excluded from the recursion
        let mut a = DenseMatrix::identity(n);
        let mut b = vec![T::zero(); n];
        for x in 0..n {
            b[x] = z * p[(x, y)];
            for w in (0..n).filter(|&w| w != y) {
                a[(x, w)] = a[(x, w)] - z * p[(x, w)];
            }
        }
        let f = crate::linalg::solve(&a, &b).ok_or_else(|| Error::SingularResolvent {
            factor: chain.name.clone(),
            z: to_f64(&z),
            reason: "first-passage system is singular".into(),
        })?;
        for x in 0..n {
            let fx = if x == y { T::one() } else { f[x] };
            fact_first = fact_first.max((cache.green(x, y) - fx * cache.green(y, y)).abs());
        }
    }
    let mut fact_last = T::zero();
    for x in 0..n {
        for y in (0..n).filter(|&y| y != x) {
            let mut rhs = z * p[(x, y)];
            for w in (0..n).filter(|&w| w != x) {
                rhs = rhs + cache.last_visit(x, w) * z * p[(w, y)];
            }
            fact_last = fact_last.max((cache.last_visit(x, y) - rhs).abs());
        }
    }
    let sum_l: T = (1..n).map(|h| cache.last_visit(0, h)).sum();
    let target = T::one() / ((T::one() - z) * cache.green(0, 0)) - T::one();
    Ok(IdentityResiduals {
        resolvent: to_f64(&cache.residual),
        row_sum: to_f64(&row_sum),
        factorization_first: to_f64(&fact_first),
        factorization_last: to_f64(&fact_last),
        sum_last_visit: to_f64(&(sum_l - target).abs()),
    })
}

/// `F(x,y|z)` straight from a cache.
pub fn first_visit<T: Scalar>(cache: &FactorResolventCache<T>, x: usize, y: usize) -> T {
    cache.first_visit(x, y)
}

/// `L(x,y|z)` straight from a cache.
pub fn last_visit<T: Scalar>(cache: &FactorResolventCache<T>, x: usize, y: usize) -> T {
    cache.last_visit(x, y)
}

/// `U(x,x|z)` straight from a cache.
pub fn first_return<T: Scalar>(cache: &FactorResolventCache<T>, x: usize) -> T {
    cache.first_return(x)
}
