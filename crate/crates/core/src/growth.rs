//! Growth rates with respect to block length (`λ₀`) and to the natural
//! directed graph metric (`λ₁`), exact sphere counts, and the two entropy
//! inequalities `h ≤ log λ₀ · ℓ₀` and `h ≤ log λ₁ · ℓ₁`.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{perron_eigen, DenseMatrix, PerronEigen};
use crate::product::FreeProductSpec;
use crate::scalar::Probability;
use crate::word::{Letter, Word};

/// Relative tolerance of the Perron iterations.
pub const PERRON_TOL: f64 = 1e-12;
pub const PERRON_MAX_ITER: usize = 100_000;

/// `D` with `d_{ij} = |V_j| − 1` off the diagonal.
pub fn block_matrix<T: Probability>(spec: &FreeProductSpec<T>) -> DenseMatrix<f64> {
    let r = spec.rank();
    let mut d = DenseMatrix::zeros(r, r);
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            d[(i, j)] = (spec.factors[j].len() - 1) as f64;
        }
    }
    d
}

/// `λ₀`, the Perron root of `D`.
pub fn lambda_block<T: Probability>(spec: &FreeProductSpec<T>) -> PerronEigen<f64> {
    perron_eigen(&block_matrix(spec), PERRON_TOL, PERRON_MAX_ITER)
}

/// `|S₀(n)|` for `n = 0..=n_max`: words of block length `n`.
pub fn block_sphere_counts<T: Probability>(spec: &FreeProductSpec<T>, n_max: usize) -> Vec<u128> {
    let m: Vec<u128> = spec.factors.iter().map(|f| (f.len() - 1) as u128).collect();
    let mut out = vec![1u128];
    let mut by_type = m.clone();
    for _ in 1..=n_max {
        out.push(by_type.iter().sum());
        let total: u128 = by_type.iter().sum();
        by_type = by_type.iter().zip(&m).map(|(&c, &mj)| mj * (total - c)).collect();
    }
    out
}

/// A vertex of the cone-type graph: the root or a non-root factor state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeVertex {
    Root,
    State { factor: usize, state: usize },
}

/// Finite directed graph whose directed cover is a distance-preserving
/// spanning tree of the free product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeGraph {
    pub vertices: Vec<ConeVertex>,
    /// Adjacency lists, sorted ascending.
    pub edges: Vec<Vec<usize>>,
}

impl ConeGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    pub fn adjacency(&self) -> DenseMatrix<f64> {
        let n = self.len();
        let mut a = DenseMatrix::zeros(n, n);
        for (x, ys) in self.edges.iter().enumerate() {
            for &y in ys {
                a[(x, y)] += 1.0;
            }
        }
        a
    }

    /// Number of directed paths of length `n` from the root, `n = 0..=n_max`.
    pub fn path_counts_from_root(&self, n_max: usize) -> Vec<u128> {
        let mut cur = vec![0u128; self.len()];
        cur[0] = 1;
        let mut out = vec![1u128];
        for _ in 1..=n_max {
            let mut next = vec![0u128; self.len()];
            for (x, ys) in self.edges.iter().enumerate() {
                for &y in ys {
                    next[y] += cur[x];
                }
            }
            out.push(next.iter().sum());
            cur = next;
        }
        out
    }
}

/// BFS tree children of every state of one factor, ascending tie-break.
fn bfs_tree_children<T: Probability>(chain: &crate::factor::FactorChain<T>) -> Vec<Vec<usize>> {
    let n = chain.len();
    let mut children = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for y in chain.successors(x) {
            if !seen[y] {
                seen[y] = true;
                children[x].push(y);
                queue.push_back(y);
            }
        }
    }
    children
}

/// Builds the cone-type graph: tree edges inside each factor, and from every
/// non-root state of factor `i` the root tree edges of every other factor.
pub fn build_cone_graph<T: Probability>(spec: &FreeProductSpec<T>) -> ConeGraph {
    let r = spec.rank();
    let trees: Vec<Vec<Vec<usize>>> = spec.factors.iter().map(bfs_tree_children).collect();
    let mut vertices = vec![ConeVertex::Root];
    let mut index = vec![Vec::new(); r];
    for (i, f) in spec.factors.iter().enumerate() {
        index[i] = vec![usize::MAX; f.len()];
        for s in 1..f.len() {
            index[i][s] = vertices.len();
            vertices.push(ConeVertex::State { factor: i, state: s });
        }
    }
    let mut edges = vec![Vec::new(); vertices.len()];
    for j in 0..r {
        edges[0].extend(trees[j][0].iter().map(|&y| index[j][y]));
    }
    for i in 0..r {
        for s in 1..spec.factors[i].len() {
            let v = index[i][s];
            edges[v].extend(trees[i][s].iter().map(|&y| index[i][y]));
            for j in (0..r).filter(|&j| j != i) {
                edges[v].extend(trees[j][0].iter().map(|&y| index[j][y]));
            }
        }
    }
    for e in &mut edges {
        e.sort_unstable();
    }
    ConeGraph { vertices, edges }
}

/// `λ₁`, the Perron root of the cone graph's adjacency matrix.
pub fn lambda_metric(graph: &ConeGraph) -> PerronEigen<f64> {
    perron_eigen(&graph.adjacency(), PERRON_TOL, PERRON_MAX_ITER)
}

/// `|S₁(n)|` for `n = 0..=n_max` by breadth-first search over words in the
/// directed free-product graph. Aborts above `limit` visited words.
pub fn metric_sphere_counts_bfs<T: Probability>(
    spec: &FreeProductSpec<T>,
    n_max: usize,
    limit: usize,
) -> Result<Vec<u128>> {
    let counts = metric_sphere_counts_within(spec, n_max, limit);
    if counts.len() == n_max + 1 {
        Ok(counts)
    } else {
        Err(Error::StateSpaceExplosion {
            reached: limit + 1,
            limit,
        })
    }
}

/// Sphere counts of every radius whose ball holds at most `limit` words,
/// up to `n_max`.
pub fn metric_sphere_counts_within<T: Probability>(spec: &FreeProductSpec<T>, n_max: usize, limit: usize) -> Vec<u128> {
    let mut counts = vec![1u128];
    let mut seen: HashSet<Word> = HashSet::new();
    let mut frontier = vec![Word::root()];
    seen.insert(Word::root());
    'levels: for _ in 0..n_max {
        let mut next = Vec::new();
        for w in &frontier {
            for nb in word_neighbours(spec, w) {
                if seen.insert(nb.clone()) {
                    if seen.len() > limit {
                        break 'levels;
                    }
                    next.push(nb);
                }
            }
        }
        counts.push(next.len() as u128);
        frontier = next;
    }
    counts
}

/// Out-neighbours of a word in the directed free-product graph.
pub fn word_neighbours<T: Probability>(spec: &FreeProductSpec<T>, w: &Word) -> Vec<Word> {
    let mut out = Vec::new();
    let top = w.kind();
    for (i, f) in spec.factors.iter().enumerate() {
        if top == Some(i) {
            let last = *w.0.last().expect("nonempty word");
            for y in f.successors(last.state()) {
                let mut v = w.0.clone();
                v.pop();
                if y != 0 {
                    v.push(Letter::new(i, y));
                }
                out.push(Word(v));
            }
        } else {
            for y in f.successors(0) {
                let mut v = w.0.clone();
                v.push(Letter::new(i, y));
                out.push(Word(v));
            }
        }
    }
    out
}

/// `l₁(x)`: sum of the directed root distances of the letters of `x`.
pub fn metric_length(root_distances: &[Vec<usize>], w: &Word) -> usize {
    w.letters().iter().map(|l| root_distances[l.factor()][l.state()]).sum()
}

/// Directed root distances of every factor, as plain integers.
pub fn factor_root_distances<T: Probability>(spec: &FreeProductSpec<T>) -> Vec<Vec<usize>> {
    spec.factors
        .iter()
        .map(|f| {
            f.root_distances()
                .into_iter()
                .map(|d| d.expect("validated factor is reachable"))
                .collect()
        })
        .collect()
}

/// Verdicts for `h ≤ g₀ ℓ₀` and `h ≤ g₁ ℓ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub block_bound: f64,
    pub block_slack: f64,
    pub block_holds: bool,
    /// `None` when no `ℓ₁` estimate is available.
    pub metric_bound: Option<f64>,
    pub metric_slack: Option<f64>,
    pub metric_holds: Option<bool>,
}

/// Checks both inequalities. The metric one allows three standard errors of
/// the Monte Carlo `ℓ₁`.
pub fn check_inequalities(h: f64, ell0: f64, ell1: Option<(f64, f64)>, lambda0: f64, lambda1: f64) -> InequalityReport {
    let block_bound = lambda0.ln() * ell0;
    let block_slack = block_bound - h;
    let (metric_bound, metric_slack, metric_holds) = match ell1 {
        Some((l1, se)) => {
            let g1 = lambda1.ln();
            let bound = g1 * l1;
            let slack = bound - h;
            (Some(bound), Some(slack), Some(h <= bound + 3.0 * se * g1))
        }
        None => (None, None, None),
    };
    InequalityReport {
        block_bound,
        block_slack,
        block_holds: h <= block_bound + 1e-9,
        metric_bound,
        metric_slack,
        metric_holds,
    }
}

/// Growth summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub lambda0: f64,
    pub lambda0_residual: f64,
    pub lambda1: f64,
    pub lambda1_residual: f64,
    pub g0: f64,
    pub g1: f64,
    pub cone_vertices: usize,
    pub sphere_counts_block: Vec<u128>,
    /// By BFS; stops early when the ball outgrows `BFS_LIMIT`.
    pub sphere_counts_metric: Vec<u128>,
    /// Path counts in the cone graph; equal to the BFS metric counts.
    pub sphere_counts_cone: Vec<u128>,
    /// Relative gap between `λ₀` and the sphere ratio at `n_max`, taken over
    /// two steps, `(|S(n)|/|S(n−2)|)^{1/2}`, because `D` may be bipartite.
    /// `None` when `n_max` is too small.
    pub block_ratio_gap: Option<f64>,
    /// Relative gap between `λ₁` and `|S₁(n)|/|S₁(n−1)|` at `n_max`.
    pub metric_ratio_gap: Option<f64>,
}

/// Word-count guard for the BFS sphere oracle.
pub const BFS_LIMIT: usize = 2_000_000;

pub fn growth_report<T: Probability>(spec: &FreeProductSpec<T>, n_max: usize) -> Result<GrowthReport> {
    let e0 = lambda_block(spec);
    let cone = build_cone_graph(spec);
    let e1 = lambda_metric(&cone);
    let block = block_sphere_counts(spec, n_max);
    let metric = metric_sphere_counts_within(spec, n_max, BFS_LIMIT);
    let cone_counts = cone.path_counts_from_root(n_max);
    let ratio_gap = |c: &[u128], lambda: f64, span: usize| {
        let n = c.len() - 1;
        if n < span || c[n - span] == 0 {
            None
        } else {
            let ratio = (c[n] as f64 / c[n - span] as f64).powf(1.0 / span as f64);
            Some((ratio - lambda).abs() / lambda)
        }
    };
    Ok(GrowthReport {
        lambda0: e0.value,
        lambda0_residual: e0.residual,
        lambda1: e1.value,
        lambda1_residual: e1.residual,
        g0: e0.value.ln(),
        g1: e1.value.ln(),
        cone_vertices: cone.len(),
        block_ratio_gap: ratio_gap(&block, e0.value, 2),
        metric_ratio_gap: ratio_gap(&metric, e1.value, 1),
        sphere_counts_block: block,
        sphere_counts_metric: metric,
        sphere_counts_cone: cone_counts,
    })
}
