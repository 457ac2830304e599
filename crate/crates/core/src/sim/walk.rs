//! The free-product walk on words, run for many independent walkers.
//!
//! Every walker owns a `ChaCha8Rng` seeded from the master seed with its own
//! stream, and walkers are processed in fixed-size chunks whose aggregates
//! are merged in chunk order. Serial and parallel runs are therefore
//! bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exit_chain::ExitChainKernel;
use crate::product::FreeProductSpec;
use crate::word::{Letter, Word};
use crate::xi::XiSolution;

/// Walkers per work unit.
pub const CHUNK: usize = 256;
/// Exit letters discarded at the start of each path for the `h_Q` estimate.
pub const EXIT_BURN_IN: usize = 10;
/// Letters below the top of the final word that are not yet treated as exit
/// letters; `k(n) = ‖X_n‖ − EXIT_MARGIN`.
pub const EXIT_MARGIN: usize = 20;

/// One possible move from a given top letter: factor, target state, probability.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Move {
    factor: usize,
    state: usize,
}

/// Cumulative move tables, one per top letter (index 0 for the empty word).
#[derive(Debug, Clone)]
pub struct Stepper {
    offsets: Vec<usize>,
    cumulative: Vec<Vec<f64>>,
    moves: Vec<Vec<Move>>,
    rank: usize,
}

impl Stepper {
    pub fn new(spec: &FreeProductSpec<f64>) -> Self {
        let r = spec.rank();
        let mut offsets = vec![0; r];
        let mut next = 1;
        for (i, f) in spec.factors.iter().enumerate() {
            offsets[i] = next - 1;
            next += f.len() - 1;
        }
        let context = |top: Option<(usize, usize)>| {
            let mut cum = Vec::new();
            let mut mv = Vec::new();
            let mut acc = 0.0;
            for (i, f) in spec.factors.iter().enumerate() {
                let from = match top {
                    Some((ti, s)) if ti == i => s,
                    _ => 0,
                };
                for y in 0..f.len() {
                    let p = spec.alphas[i] * f.p(from, y);
                    if p > 0.0 {
                        acc += p;
                        cum.push(acc);
                        mv.push(Move { factor: i, state: y });
                    }
                }
            }
            // guard against rounding in the last bucket
            if let Some(last) = cum.last_mut() {
                *last = f64::INFINITY;
            }
            (cum, mv)
        };
        let mut cumulative = Vec::with_capacity(next);
        let mut moves = Vec::with_capacity(next);
        let (c, m) = context(None);
        cumulative.push(c);
        moves.push(m);
        for (i, f) in spec.factors.iter().enumerate() {
            for s in 1..f.len() {
                let (c, m) = context(Some((i, s)));
                cumulative.push(c);
                moves.push(m);
            }
        }
        Self {
            offsets,
            cumulative,
            moves,
            rank: r,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn context_of(&self, top: Option<Letter>) -> usize {
        match top {
            None => 0,
            Some(l) => self.offsets[l.factor()] + l.state(),
        }
    }

    /// One step of the walk. Returns the changed position (1-based depth):
    /// the new top after a push or a move, the removed depth after a pop.
    pub fn step<R: Rng>(&self, word: &mut Word, rng: &mut R) -> usize {
        let top = word.0.last().copied();
        let ctx = self.context_of(top);
        let u: f64 = rng.random();
        let cum = &self.cumulative[ctx];
        let k = cum.partition_point(|&c| c <= u);
        let mv = self.moves[ctx][k];
        match top {
            Some(l) if l.factor() == mv.factor => {
                let depth = word.0.len();
                if mv.state == 0 {
                    word.0.pop();
                } else {
                    *word.0.last_mut().expect("nonempty") = Letter::new(mv.factor, mv.state);
                }
                depth
            }
            _ => {
                word.0.push(Letter::new(mv.factor, mv.state));
                word.0.len()
            }
        }
    }
}

/// Per-letter lengths used to score words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterWeights {
    /// `−log L_i(o_i,g|ξ_i)`.
    pub l_length: Vec<Vec<f64>>,
    /// `−log F_i(o_i,g|ξ_i)`.
    pub f_length: Vec<Vec<f64>>,
    /// Directed root distance in the factor graph.
    pub metric: Vec<Vec<usize>>,
    /// `log q((∗,i),(h,j))`, `−∞` where `q = 0`.
    pub log_q: Vec<Vec<Vec<f64>>>,
}

impl LetterWeights {
    /// Only the graph metric; used when the analytic stages are unavailable.
    pub fn metric_only(spec: &FreeProductSpec<f64>) -> Self {
        let zeros: Vec<Vec<f64>> = spec.factors.iter().map(|f| vec![0.0; f.len()]).collect();
        Self {
            l_length: zeros.clone(),
            f_length: zeros,
            metric: crate::growth::factor_root_distances(spec),
            log_q: Vec::new(),
        }
    }

    pub fn has_lengths(&self) -> bool {
        !self.log_q.is_empty()
    }

    pub fn new(spec: &FreeProductSpec<f64>, sol: &XiSolution<f64>, kernel: &ExitChainKernel<f64>) -> Self {
        let r = spec.rank();
        let f_length = sol
            .caches
            .iter()
            .map(|c| {
                (0..c.len())
                    .map(|g| if g == 0 { 0.0 } else { -c.first_visit(0, g).ln() })
                    .collect()
            })
            .collect();
        let log_q = (0..r)
            .map(|i| {
                (0..r)
                    .map(|j| kernel.targets[i][j].iter().map(|q| q.ln()).collect())
                    .collect()
            })
            .collect();
        Self {
            l_length: kernel.lengths.clone(),
            f_length,
            metric: crate::growth::factor_root_distances(spec),
            log_q,
        }
    }
}

/// Everything retained about one path when records are requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub horizon: usize,
    pub final_word: Word,
    /// `last_change[d−1]`: last time position `d` changed (0 if never).
    pub last_change: Vec<usize>,
    /// `e_k = max_{c ≤ k} last_change[c]`, for `k ≤ ‖X_n‖`.
    pub exit_times: Vec<usize>,
    /// Changed position at every step.
    pub changes: Vec<u32>,
    /// Graph distance of the final word from the root.
    pub metric_length: usize,
}

impl PathRecord {
    /// `k(n)`: number of prefix letters treated as frozen.
    pub fn frozen_letters(&self) -> usize {
        self.final_word.block_length().saturating_sub(EXIT_MARGIN)
    }
}

/// Scalar summary of one walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerSummary {
    pub block: f64,
    pub l_length: f64,
    pub f_length: f64,
    pub metric: f64,
    /// Mean of `−log q` over the exit letters after burn-in; `None` if the
    /// path froze too few letters.
    pub exit_rate: Option<f64>,
}

/// Simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimParams {
    pub walkers: usize,
    pub horizon: usize,
    pub seed: u64,
    pub parallel: bool,
    pub keep_records: bool,
}

/// Output of [`run_walkers`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub params: SimParams,
    pub summaries: Vec<WalkerSummary>,
    /// `exit_counts[i][j][h]`: observed exit transitions `(∗,i) → (h,j)`.
    pub exit_counts: Vec<Vec<Vec<u64>>>,
    pub records: Option<Vec<PathRecord>>,
}

/// RNG of walker `index` under master seed `seed`.
pub fn walker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct ChunkOut {
    summaries: Vec<WalkerSummary>,
    exit_counts: Vec<Vec<Vec<u64>>>,
    records: Vec<PathRecord>,
}

fn run_one(
    stepper: &Stepper,
    weights: &LetterWeights,
    params: &SimParams,
    index: usize,
    exit_counts: &mut [Vec<Vec<u64>>],
) -> (WalkerSummary, Option<PathRecord>) {
    let mut rng = walker_rng(params.seed, index);
    let mut word = Word::root();
    let mut last_change: Vec<usize> = Vec::new();
    let mut changes = Vec::new();
    for t in 1..=params.horizon {
        let pos = stepper.step(&mut word, &mut rng);
        if last_change.len() < pos {
            last_change.resize(pos, 0);
        }
        last_change[pos - 1] = t;
        if params.keep_records {
            changes.push(pos as u32);
        }
    }
    let letters = word.letters();
    let sum = |table: &Vec<Vec<f64>>| letters.iter().map(|l| table[l.factor()][l.state()]).sum::<f64>();
    let metric: usize = letters.iter().map(|l| weights.metric[l.factor()][l.state()]).sum();
    let n = params.horizon as f64;

    let frozen = if weights.log_q.is_empty() {
        0
    } else {
        letters.len().saturating_sub(EXIT_MARGIN)
    };
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for k in (EXIT_BURN_IN + 1)..frozen {
        let (prev, cur) = (letters[k - 1], letters[k]);
        log_sum += weights.log_q[prev.factor()][cur.factor()][cur.state()];
        exit_counts[prev.factor()][cur.factor()][cur.state()] += 1;
        used += 1;
    }
    let summary = WalkerSummary {
        block: letters.len() as f64 / n,
        l_length: sum(&weights.l_length) / n,
        f_length: sum(&weights.f_length) / n,
        metric: metric as f64 / n,
        exit_rate: (used > 0).then(|| -log_sum / used as f64),
    };
    let record = params.keep_records.then(|| {
        let depth = word.block_length();
        let mut exit_times = Vec::with_capacity(depth);
        let mut running = 0;
        for &c in last_change.iter().take(depth) {
            running = running.max(c);
            exit_times.push(running);
        }
        PathRecord {
            horizon: params.horizon,
            final_word: word.clone(),
            last_change: last_change.clone(),
            exit_times,
            changes,
            metric_length: metric,
        }
    });
    (summary, record)
}

fn empty_counts(spec_sizes: &[usize]) -> Vec<Vec<Vec<u64>>> {
    let r = spec_sizes.len();
    (0..r)
        .map(|_| spec_sizes.iter().map(|&n| vec![0u64; n]).collect())
        .collect()
}

/// Runs `walkers` independent paths of length `horizon`.
pub fn run_walkers(spec: &FreeProductSpec<f64>, weights: &LetterWeights, params: SimParams) -> SimRun {
    let stepper = Stepper::new(spec);
    let sizes: Vec<usize> = spec.factors.iter().map(|f| f.len()).collect();
    let chunks: Vec<(usize, usize)> = (0..params.walkers)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(params.walkers)))
        .collect();
    let work = |&(start, end): &(usize, usize)| {
        let mut out = ChunkOut {
            summaries: Vec::with_capacity(end - start),
            exit_counts: empty_counts(&sizes),
            records: Vec::new(),
        };
        for idx in start..end {
            let (s, rec) = run_one(&stepper, weights, &params, idx, &mut out.exit_counts);
            out.summaries.push(s);
            out.records.extend(rec);
        }
        out
    };
    let outs: Vec<ChunkOut> = if params.parallel {
        chunks.par_iter().map(work).collect()
    } else {
        chunks.iter().map(work).collect()
    };
    let mut run = SimRun {
        params,
        summaries: Vec::with_capacity(params.walkers),
        exit_counts: empty_counts(&sizes),
        records: params.keep_records.then(Vec::new),
    };
    for out in outs {
        run.summaries.extend(out.summaries);
        for (a, b) in run.exit_counts.iter_mut().zip(&out.exit_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
            }
        }
        if let Some(r) = run.records.as_mut() {
            r.extend(out.records);
        }
    }
    run
}

/// Final-word histogram of `walkers` paths of length `horizon`.
pub fn empirical_distribution(
    spec: &FreeProductSpec<f64>,
    horizon: usize,
    walkers: usize,
    seed: u64,
    parallel: bool,
) -> std::collections::BTreeMap<Word, u64> {
    use std::collections::BTreeMap;
    let stepper = Stepper::new(spec);
    let chunks: Vec<(usize, usize)> = (0..walkers)
        .step_by(CHUNK * 16)
        .map(|s| (s, (s + CHUNK * 16).min(walkers)))
        .collect();
    let work = |&(start, end): &(usize, usize)| {
        let mut hist: BTreeMap<Word, u64> = BTreeMap::new();
        for idx in start..end {
            let mut rng = walker_rng(seed, idx);
            let mut w = Word::root();
            for _ in 0..horizon {
                stepper.step(&mut w, &mut rng);
            }
            *hist.entry(w).or_default() += 1;
        }
        hist
    };
    let parts: Vec<BTreeMap<Word, u64>> = if parallel {
        chunks.par_iter().map(work).collect()
    } else {
        chunks.iter().map(work).collect()
    };
    let mut total = BTreeMap::new();
    for p in parts {
        for (w, c) in p {
            *total.entry(w).or_default() += c;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn first_step_always_pushes() {
        let spec = presets::two_factor_example();
        let st = Stepper::new(&spec);
        for seed in 0..50 {
            let mut w = Word::root();
            let mut rng = walker_rng(seed, 0);
            assert_eq!(st.step(&mut w, &mut rng), 1);
            assert_eq!(w.block_length(), 1);
        }
    }

    #[test]
    fn words_stay_well_formed() {
        let spec = presets::two_factor_example();
        let st = Stepper::new(&spec);
        let mut rng = walker_rng(1, 3);
        let mut w = Word::root();
        for _ in 0..10_000 {
            st.step(&mut w, &mut rng);
            assert!(w.is_well_formed());
        }
    }

    #[test]
    fn top_g2_moves_to_g1_or_pops() {
        // X1 = {o1,g1,g2}; from g2 a factor-1 step pops or returns to g1
        let spec = presets::two_factor_example();
        let st = Stepper::new(&spec);
        let start = Word(vec![Letter::new(1, 1), Letter::new(0, 2)]);
        let (mut pops, mut to_g1, mut factor1) = (0, 0, 0);
        let mut rng = walker_rng(9, 0);
        for _ in 0..200_000 {
            let mut w = start.clone();
            st.step(&mut w, &mut rng);
            match w.block_length() {
                1 => {
                    pops += 1;
                    factor1 += 1;
                }
                2 => {
                    assert_eq!(w.0[1], Letter::new(0, 1));
                    to_g1 += 1;
                    factor1 += 1;
                }
                _ => {}
            }
        }
        let p_pop = pops as f64 / factor1 as f64;
        assert!((p_pop - 0.5).abs() < 0.01, "{p_pop}");
        assert_eq!(pops + to_g1, factor1);
        assert!((factor1 as f64 / 200_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn rng_streams_are_distinct_and_reproducible() {
        let a: u64 = walker_rng(5, 0).random();
        let b: u64 = walker_rng(5, 1).random();
        let c: u64 = walker_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
