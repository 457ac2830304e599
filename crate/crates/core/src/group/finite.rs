//! Finite groups given by a multiplication table.

use crate::error::Result;
use crate::factor::{green_factor, FactorChain, FactorResolventCache};
use crate::linalg::DenseMatrix;

use super::{GroupEvaluation, GroupFactor};

/// A finite group with elements `0..order`, identity `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGroupFactor {
    pub name: String,
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    mu: Vec<(usize, f64)>,
}

impl FiniteGroupFactor {
    /// Builds a group from its table. The identity must be element 0.
    pub fn from_table(name: &str, table: Vec<Vec<usize>>, mu: &[(usize, f64)]) -> Self {
        let n = table.len();
        let inverse = (0..n)
            .map(|a| (0..n).find(|&b| table[a][b] == 0).expect("group table has inverses"))
            .collect();
        Self {
            name: name.to_string(),
            table,
            inverse,
            mu: mu.to_vec(),
        }
    }

    /// `ℤ/m` with `μ` given on residues.
    pub fn cyclic(name: &str, m: usize, mu: &[(usize, f64)]) -> Self {
        let table = (0..m).map(|a| (0..m).map(|b| (a + b) % m).collect()).collect();
        Self::from_table(name, table, mu)
    }

    /// `ℤ/m × ℤ/2`; element `(x, j)` has index `2x + j`.
    pub fn cyclic_times_two(name: &str, m: usize, mu: &[((usize, usize), f64)]) -> Self {
        let idx = |x: usize, j: usize| 2 * x + j;
        let n = 2 * m;
        let table = (0..n)
            .map(|a| (0..n).map(|b| idx((a / 2 + b / 2) % m, (a % 2 + b % 2) % 2)).collect())
            .collect();
        let mu: Vec<(usize, f64)> = mu.iter().map(|&((x, j), p)| (idx(x % m, j % 2), p)).collect();
        Self::from_table(name, table, &mu)
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    /// The random walk `p(x,y) = μ(x^{-1}y)` as a finite factor chain.
    pub fn to_chain(&self) -> FactorChain<f64> {
        let n = self.order();
        let mut p = DenseMatrix::zeros(n, n);
        for x in 0..n {
            for &(g, m) in &self.mu {
                p[(x, self.table[x][g])] += m;
            }
        }
        let labels = (0..n).map(|k| format!("{}{}", self.name, k)).collect();
        FactorChain::new(self.name.clone(), labels, p)
    }
}

/// Green matrix of a finite group factor.
#[derive(Debug, Clone)]
pub struct FiniteGroupEval {
    cache: FactorResolventCache<f64>,
}

impl GroupEvaluation<usize> for FiniteGroupEval {
    fn root_green(&self) -> f64 {
        self.cache.green(0, 0)
    }

    fn first_visit(&self, g: &usize) -> f64 {
        self.cache.first_visit(0, *g)
    }

    fn shell(&self, k: usize) -> Vec<usize> {
        if k == 1 {
            (1..self.cache.len()).collect()
        } else {
            Vec::new()
        }
    }

    fn shell_count(&self) -> Option<usize> {
        Some(1)
    }

    fn tail_bound(&self, _n: usize) -> f64 {
        0.0
    }

    fn mass_tail_bound(&self, _n: usize) -> f64 {
        0.0
    }
}

impl GroupFactor for FiniteGroupFactor {
    type Elem = usize;
    type Eval = FiniteGroupEval;

    fn name(&self) -> &str {
        &self.name
    }

    fn identity(&self) -> usize {
        0
    }

    fn mul(&self, a: &usize, b: &usize) -> usize {
        self.table[*a][*b]
    }

    fn inverse(&self, a: &usize) -> usize {
        self.inverse[*a]
    }

    fn support(&self) -> Vec<(usize, f64)> {
        self.mu.clone()
    }

    fn evaluate(&self, w: f64) -> Result<FiniteGroupEval> {
        Ok(FiniteGroupEval {
            cache: green_factor(&self.to_chain(), w)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::validate_factor;

    #[test]
    fn cayley_chain_is_valid() {
        let g = FiniteGroupFactor::cyclic_times_two(
            "z",
            5,
            &[((1, 0), 1.0 / 3.0), ((4, 0), 1.0 / 3.0), ((0, 1), 1.0 / 3.0)],
        );
        assert_eq!(g.order(), 10);
        assert!(validate_factor(&g.to_chain()).is_valid());
        for a in 0..10 {
            assert_eq!(g.mul(&a, &g.inverse(&a)), 0);
        }
    }
}
