//! The group `ℤ × ℤ/2` with `μ((±1,0)) = μ((0,1)) = 1/3`.
//!
//! With `a = (1,0)`, `b = (1,1)`, `c = (0,1)`, the half-space first-passage
//! functions satisfy
//!
//! ```text
//! F̂(a) = (w/3)(1 + F̂(b) + F̂(a)² + F̂(b)²)
//! F̂(b) = (w/3)(F̂(a) + 2 F̂(a) F̂(b))
//! ```
//!
//! and `F(a), F(b), F(c)` solve a 3×3 linear system in terms of them. Every
//! other `F((±n,j))` is a binomial sum in `F̂(a), F̂(b), F(c)`.

use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix};

use super::{GroupEvaluation, GroupFactor};

/// Element `(x, j)` of `ℤ × ℤ/2`.
pub type Zz2Elem = (i64, u8);

pub const A: Zz2Elem = (1, 0);
pub const B: Zz2Elem = (1, 1);
pub const C: Zz2Elem = (0, 1);

/// The `ℤ × ℤ/2` factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zz2Factor {
    pub name: String,
}

impl Zz2Factor {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string() }
    }
}

/// Generating functions of the `ℤ × ℤ/2` walk at argument `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zz2Eval {
    pub w: f64,
    pub fhat_a: f64,
    pub fhat_b: f64,
    /// Probability (weighted by `w`) of ever reaching level 1.
    pub fhat: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub f_c: f64,
    pub root_green: f64,
    /// Residual of the `F̂(a), F̂(b)` system.
    pub half_space_residual: f64,
    /// Residual of the `F(a), F(b), F(c)` system.
    pub linear_residual: f64,
    /// Residual of `F̂ = (w/3)(1 + F̂ + F̂²)`.
    pub level_residual: f64,
    /// Whether the bisection fallback was needed for `F̂(a), F̂(b)`.
    pub used_fallback: bool,
}

fn half_space_map(w: f64, a: f64, b: f64) -> (f64, f64) {
    (w / 3.0 * (1.0 + b + a * a + b * b), w / 3.0 * (a + 2.0 * a * b))
}

/// Monotone fixed-point iteration from `(0,0)`.
fn half_space_iterate(w: f64, max_iter: usize) -> Option<(f64, f64)> {
    let (mut a, mut b) = (0.0, 0.0);
    for _ in 0..max_iter {
        let (na, nb) = half_space_map(w, a, b);
        if !(na.is_finite() && nb.is_finite()) || na >= 1.0 {
            return None;
        }
        let step = (na - a).abs() + (nb - b).abs();
        a = na;
        b = nb;
        if step < 1e-16 {
            return Some((a, b));
        }
    }
    None
}

/// Eliminates `F̂(b) = (w/3) F̂(a) / (1 − (2w/3) F̂(a))` and bisects the
/// resulting scalar equation for its smallest root.
fn half_space_bisect(w: f64) -> Option<(f64, f64)> {
    let b_of = |a: f64| w / 3.0 * a / (1.0 - 2.0 * w / 3.0 * a);
    let res = |a: f64| {
        let b = b_of(a);
        w / 3.0 * (1.0 + b + a * a + b * b) - a
    };
    let upper = (1.5 / w).min(1.0) * (1.0 - 1e-12);
    let grid = 10_000;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=grid {
        let x = upper * k as f64 / grid as f64;
        if res(x) <= 0.0 {
            hi = Some(x);
            break;
        }
        lo = x;
    }
    let mut hi = hi?;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if res(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let a = 0.5 * (lo + hi);
    Some((a, b_of(a)))
}

/// Smallest root of `F̂ = (w/3)(1 + F̂ + F̂²)`.
pub fn level_passage(w: f64) -> f64 {
    let q = w / 3.0;
    let disc = (1.0 - q) * (1.0 - q) - 4.0 * q * q;
    ((1.0 - q) - disc.max(0.0).sqrt()) / (2.0 * q)
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Zz2Eval {
    /// Evaluates all generating functions at `w ∈ (0,1)`.
    pub fn at(w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::SingularResolvent {
                factor: "Z x Z/2".into(),
                z: w,
                reason: "argument outside (0,1)".into(),
            });
        }
        let (fhat_a, fhat_b, used_fallback) = match half_space_iterate(w, 100_000) {
            Some((a, b)) => (a, b, false),
            None => {
                let (a, b) = half_space_bisect(w).ok_or_else(|| Error::NoRoot("half-space system".into()))?;
                (a, b, true)
            }
        };
        let (ia, ib) = half_space_map(w, fhat_a, fhat_b);
        let half_space_residual = (ia - fhat_a).abs().max((ib - fhat_b).abs());

        let q = w / 3.0;
        let m = DenseMatrix::from_rows(vec![
            vec![1.0 - q * fhat_a, -q * (1.0 + fhat_b), 0.0],
            vec![-q * (1.0 + fhat_b), 1.0 - q * fhat_a, -q],
            vec![0.0, -2.0 * q, 1.0],
        ]);
        let rhs = [q, 0.0, q];
        let x = solve(&m, &rhs).ok_or(Error::SingularJacobian { z: w })?;
        let (f_a, f_b, f_c) = (x[0], x[1], x[2]);
        let linear_residual = [
            q * (1.0 + f_b + fhat_a * f_a + fhat_b * f_b) - f_a,
            q * (f_c + f_a + fhat_a * f_b + fhat_b * f_a) - f_b,
            q * (1.0 + 2.0 * f_b) - f_c,
        ]
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));

        let fhat = level_passage(w);
        let level_residual = (q * (1.0 + fhat + fhat * fhat) - fhat).abs();
        let root_green = 1.0 / (1.0 - 2.0 * q * f_a - q * f_c);
        Ok(Self {
            w,
            fhat_a,
            fhat_b,
            fhat,
            f_a,
            f_b,
            f_c,
            root_green,
            half_space_residual,
            linear_residual,
            level_residual,
            used_fallback,
        })
    }

    /// `F((±n, j)|w)` by the binomial sums; `F(e) = 1`, `F(c) = F(c|w)`.
    pub fn closed_form(&self, n: i64, j: u8) -> f64 {
        let n = n.unsigned_abs();
        if n == 0 {
            return if j.is_multiple_of(2) { 1.0 } else { self.f_c };
        }
        let (a, b) = (self.fhat_a, self.fhat_b);
        // even and odd powers of F̂(b)
        let even: f64 = (0..=n / 2)
            .map(|k| binomial(n, 2 * k) * b.powi(2 * k as i32) * a.powi((n - 2 * k) as i32))
            .sum();
        let odd: f64 = (0..n.div_ceil(2))
            .map(|k| binomial(n, 2 * k + 1) * b.powi(2 * k as i32 + 1) * a.powi((n - 2 * k - 1) as i32))
            .sum();
        if j.is_multiple_of(2) {
            even + odd * self.f_c
        } else {
            odd + even * self.f_c
        }
    }

    /// Smallest shell count whose certified tail is below `tol`.
    pub fn shells_for_tail(&self, tol: f64) -> usize {
        (1..)
            .find(|&n| self.tail_bound(n) < tol)
            .expect("geometric tail vanishes")
    }

    /// `min(F(a), F(b))`, the constant of the lower decay bound.
    pub fn min_first_step(&self) -> f64 {
        self.f_a.min(self.f_b)
    }

    /// Checks `F̂^{|n|−1} min(F(a),F(b)) ≤ F((n,j)) ≤ F̂^{|n|}` for `1 ≤ |n| ≤ n_max`.
    pub fn bound_sandwich_holds(&self, n_max: i64) -> bool {
        let slack = 1e-15;
        (1..=n_max).all(|n| {
            (0..2u8).all(|j| {
                let f = self.closed_form(n, j);
                let upper = self.fhat.powi(n as i32);
                let lower = self.fhat.powi(n as i32 - 1) * self.min_first_step();
                f <= upper * (1.0 + 1e-12) + slack && f >= lower * (1.0 - 1e-12) - slack
            })
        })
    }
}

impl GroupEvaluation<Zz2Elem> for Zz2Eval {
    fn root_green(&self) -> f64 {
        self.root_green
    }

    fn first_visit(&self, g: &Zz2Elem) -> f64 {
        self.closed_form(g.0, g.1)
    }

    fn shell(&self, k: usize) -> Vec<Zz2Elem> {
        let n = k as i64;
        let mut out = vec![(n, 0), (n, 1), (-n, 0), (-n, 1)];
        if k == 1 {
            out.insert(0, C);
        }
        out
    }

    fn shell_count(&self) -> Option<usize> {
        None
    }

    /// Beyond shell `n` every `g'` has `|λ(g')| = k ≥ n+1` and `|λ(gg')| ∈
    /// {k−1, k, k+1}`, so `|log(F(gg')/F(g'))| ≤ −log min(F(a),F(b))` while
    /// `F(g') ≤ F̂^k`, with four elements per level.
    fn tail_bound(&self, n: usize) -> f64 {
        let m = -self.min_first_step().ln();
        4.0 * m * self.fhat.powi(n as i32 + 1) / (1.0 - self.fhat)
    }

    fn mass_tail_bound(&self, n: usize) -> f64 {
        4.0 * self.fhat.powi(n as i32 + 1) / (1.0 - self.fhat)
    }
}

impl GroupFactor for Zz2Factor {
    type Elem = Zz2Elem;
    type Eval = Zz2Eval;

    fn name(&self) -> &str {
        &self.name
    }

    fn identity(&self) -> Zz2Elem {
        (0, 0)
    }

    fn mul(&self, a: &Zz2Elem, b: &Zz2Elem) -> Zz2Elem {
        (a.0 + b.0, (a.1 + b.1) % 2)
    }

    fn inverse(&self, a: &Zz2Elem) -> Zz2Elem {
        (-a.0, a.1)
    }

    fn support(&self) -> Vec<(Zz2Elem, f64)> {
        vec![(A, 1.0 / 3.0), ((-1, 0), 1.0 / 3.0), (C, 1.0 / 3.0)]
    }

    fn evaluate(&self, w: f64) -> Result<Zz2Eval> {
        Zz2Eval::at(w)
    }
}

/// Solution of the symmetric two-factor `ξ` equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zz2Solution {
    pub xi: f64,
    pub eval: Zz2Eval,
    /// `|ξ/(2−2ξ) − ξ G(ξ)|` at the returned point.
    pub residual: f64,
    pub bisection_steps: usize,
}

/// Solves `ξ/(2−2ξ) = ξ G(e,e|ξ)` for two `ℤ × ℤ/2` factors with weights
/// `(1/2, 1/2)` by bisection on `(0,1)` to `1e-12`.
pub fn solve_zz2_xi(alphas: &[f64]) -> Result<Zz2Solution> {
    if alphas.len() != 2 || alphas.iter().any(|a| (a - 0.5).abs() > 1e-12) {
        return Err(Error::Validation(vec![
            "the Z x Z/2 equation needs two factors with weights 1/2".into(),
        ]));
    }
    let f = |x: f64| -> Result<f64> { Ok(x / (2.0 - 2.0 * x) - x * Zz2Eval::at(x)?.root_green) };
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-6);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoRoot(format!("no sign change on [{lo}, {hi}]: {flo}, {fhi}")));
    }
    let mut steps = 0;
    while hi - lo > 1e-13 && steps < 200 {
        steps += 1;
        let m = 0.5 * (lo + hi);
        if f(m)?.signum() == flo.signum() {
            lo = m;
        } else {
            hi = m;
        }
    }
    let xi = 0.5 * (lo + hi);
    Ok(Zz2Solution {
        xi,
        eval: Zz2Eval::at(xi)?,
        residual: f(xi)?.abs(),
        bisection_steps: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{entropy_groups, solve_group_xi, GROUP_MAX_SHELLS, GROUP_REL_TOL};
    use crate::xi::XiOptions;

    /// `G(e,(x,j)|w)` by summing convolution powers on a window wide enough
    /// that no path of the summed length leaves it.
    fn lattice_green(w: f64, steps: usize) -> impl Fn(i64, u8) -> f64 {
        let half = steps as i64 + 1;
        let width = (2 * half + 1) as usize;
        let at = move |x: i64, j: usize| (x + half) as usize * 2 + j;
        let mut cur = vec![0.0; 2 * width];
        cur[at(0, 0)] = 1.0;
        let mut green = cur.clone();
        let mut wn = 1.0;
        for _ in 0..steps {
            let mut next = vec![0.0; 2 * width];
            for x in -half + 1..half {
                for j in 0..2 {
                    let p = cur[at(x, j)];
                    if p == 0.0 {
                        continue;
                    }
                    next[at(x + 1, j)] += p / 3.0;
                    next[at(x - 1, j)] += p / 3.0;
                    next[at(x, 1 - j)] += p / 3.0;
                }
            }
            wn *= w;
            for (g, n) in green.iter_mut().zip(&next) {
                *g += wn * n;
            }
            cur = next;
        }
        move |x: i64, j: u8| green[at(x, j as usize)]
    }

    #[test]
    fn xi_and_level_passage_match_reference() {
        let s = solve_zz2_xi(&[0.5, 0.5]).unwrap();
        assert!((s.xi - 0.55973).abs() < 1e-4, "{}", s.xi);
        assert!((s.eval.fhat - 0.24291).abs() < 1e-4, "{}", s.eval.fhat);
        assert!(s.eval.half_space_residual < 1e-10);
        assert!(s.eval.linear_residual < 1e-10);
        assert!(s.eval.level_residual < 1e-10);
        assert!(s.residual < 1e-10);
        assert!((s.eval.fhat_a + s.eval.fhat_b - s.eval.fhat).abs() < 1e-12);
    }

    #[test]
    fn generic_xi_iteration_agrees_with_bisection() {
        let s = solve_zz2_xi(&[0.5, 0.5]).unwrap();
        let f = [Zz2Factor::new("X"), Zz2Factor::new("Y")];
        let xi = solve_group_xi(&f, &[0.5, 0.5], &XiOptions::default()).unwrap();
        assert!((xi[0] - s.xi).abs() < 1e-11 && (xi[1] - s.xi).abs() < 1e-11);
    }

    #[test]
    fn first_visits_match_convolution_sums() {
        let w = 0.56;
        let e = Zz2Eval::at(w).unwrap();
        let g = lattice_green(w, 120);
        let g0 = g(0, 0);
        assert!((e.root_green - g0).abs() < 1e-12);
        for n in -6i64..=6 {
            for j in 0..2u8 {
                let oracle = g(n, j) / g0;
                assert!((e.closed_form(n, j) - oracle).abs() < 1e-12, "({n},{j})");
            }
        }
    }

    #[test]
    fn closed_form_base_case_symmetry_and_powers() {
        let e = Zz2Eval::at(0.55973).unwrap();
        assert!((e.closed_form(1, 0) - e.f_a).abs() < 1e-14);
        assert!((e.closed_form(1, 1) - e.f_b).abs() < 1e-14);
        for n in 1..=30 {
            for j in 0..2 {
                assert_eq!(e.closed_form(n, j), e.closed_form(-n, j));
                // (a ± b)^n split into even and odd powers of b
                let (p, m) = (
                    (e.fhat_a + e.fhat_b).powi(n as i32),
                    (e.fhat_a - e.fhat_b).powi(n as i32),
                );
                let (even, odd) = ((p + m) / 2.0, (p - m) / 2.0);
                let alt = if j == 0 { even + odd * e.f_c } else { odd + even * e.f_c };
                assert!((e.closed_form(n, j) - alt).abs() <= 1e-13 * alt);
            }
        }
        assert!(e.bound_sandwich_holds(30));
        let n = e.shells_for_tail(1e-8);
        assert!(n <= 20, "{n}");
        let geometric: f64 =
            (n + 1..n + 400).map(|k| 4.0 * e.fhat.powi(k as i32)).sum::<f64>() * -e.min_first_step().ln();
        assert!(geometric <= e.tail_bound(n) * (1.0 + 1e-12));
        assert!(e.tail_bound(n - 1) >= 1e-8);
    }

    #[test]
    fn bisection_fallback_agrees_with_iteration() {
        for w in [0.2, 0.55973, 0.9] {
            let it = half_space_iterate(w, 100_000).unwrap();
            let bi = half_space_bisect(w).unwrap();
            assert!((it.0 - bi.0).abs() < 1e-12 && (it.1 - bi.1).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_is_certified() {
        let s = solve_zz2_xi(&[0.5, 0.5]).unwrap();
        let f = [Zz2Factor::new("X"), Zz2Factor::new("Y")];
        let rep = entropy_groups(&f, &[0.5, 0.5], &[s.xi, s.xi], GROUP_REL_TOL, GROUP_MAX_SHELLS).unwrap();
        assert!(rep.tail_bound <= GROUP_REL_TOL * rep.h);
        assert!(rep.shells < 40);
        for i in 0..2 {
            assert!(rep.rho[i] > 0.0 && rep.rho[i] < 1.0);
            let gap = (rep.first_letter_mass[i] - rep.rho[i]).abs();
            assert!(gap <= rep.first_letter_tail[i] + 1e-12);
        }
        assert!(matches!(
            entropy_groups(&f, &[0.5, 0.5], &[s.xi, s.xi], 1e-30, 5),
            Err(Error::TailBoundTooLoose { .. })
        ));
    }
}
