use std::collections::BTreeMap;

use fpentropy::linalg::DenseMatrix;
use fpentropy::presets::two_factor_example;
use fpentropy::sim::enumerate::transitions;
use fpentropy::xi::free_product_root_green;
use fpentropy::{green_factor, solve_xi, Letter, Spec, Word};

const GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn state(spec: &Spec, label: &str) -> (usize, usize) {
    spec.factors
        .iter()
        .enumerate()
        .find_map(|(i, f)| f.state_index(label).map(|x| (i, x)))
        .unwrap()
}

#[test]
fn printed_generating_functions_match_on_grid() {
    let spec = two_factor_example();
    let x1 = &spec.factors[0];
    let x2 = &spec.factors[1];
    let (_, g1) = state(&spec, "g1");
    let (_, g2) = state(&spec, "g2");
    let (_, h1) = state(&spec, "h1");
    let (_, h2) = state(&spec, "h2");
    let (_, h3) = state(&spec, "h3");
    for z in GRID {
        let c1 = green_factor(x1, z).unwrap();
        let c2 = green_factor(x2, z).unwrap();
        let d2 = 1.0 - z * z / 2.0;
        let d3 = 1.0 - z * z * z / 2.0;
        let cases = [
            ("F1(g1,o1)", c1.first_visit(g1, 0), z * z / 2.0 / d2),
            ("F2(h1,o2)", c2.first_visit(h1, 0), z * z / 2.0 / d3),
            ("L1(o1,g1)", c1.last_visit(0, g1), z / d2),
            ("L1(o1,g2)", c1.last_visit(0, g2), z * z / d2),
            ("L2(o2,h1)", c2.last_visit(0, h1), z / d3),
            ("L2(o2,h2)", c2.last_visit(0, h2), z * z / d3),
            ("L2(o2,h3)", c2.last_visit(0, h3), z * z * z / 2.0 / d3),
        ];
        for (name, got, want) in cases {
            assert!((got - want).abs() < 1e-12, "{name} at z={z}: {got} vs {want}");
        }
    }
}

#[test]
fn xi_satisfies_the_printed_system() {
    let spec = two_factor_example();
    for z in [0.3, 0.6, 0.9, 1.0] {
        let sol = solve_xi(&spec, z).unwrap();
        let (x1, x2) = (sol.xi[0], sol.xi[1]);
        let f1 = |w: f64| w * w / 2.0 / (1.0 - w * w / 2.0);
        let f2 = |w: f64| w * w / 2.0 / (1.0 - w * w * w / 2.0);
        let rhs1 = (z / 2.0) / (1.0 - z / 2.0 * f2(x2));
        let rhs2 = (z / 2.0) / (1.0 - z / 2.0 * f1(x1));
        assert!((x1 - rhs1).abs() < 1e-12, "z={z}: {x1} vs {rhs1}");
        assert!((x2 - rhs2).abs() < 1e-12, "z={z}: {x2} vs {rhs2}");
    }
}

#[test]
fn factor_green_matches_matrix_power_sums() {
    let spec = two_factor_example();
    let z = 0.7f64;
    // z^{N+1}/(1−z) below 1e-14
    let n_terms = (0..).find(|&n| z.powi(n + 1) / (1.0 - z) < 1e-14).unwrap();
    for f in &spec.factors {
        let n = f.len();
        let p = f.transitions();
        let mut power = DenseMatrix::<f64>::identity(n);
        let mut sum = DenseMatrix::<f64>::zeros(n, n);
        let mut zn = 1.0;
        for _ in 0..=n_terms {
            for x in 0..n {
                for y in 0..n {
                    sum[(x, y)] += zn * power[(x, y)];
                }
            }
            power = power.matmul(p);
            zn *= z;
        }
        let g = green_factor(f, z).unwrap();
        for x in 0..n {
            for y in 0..n {
                assert!((g.green(x, y) - sum[(x, y)]).abs() < 1e-12, "{} ({x},{y})", f.name);
            }
        }
    }
}

/// `G(o,w|z)` for the free product by summing `p^{(n)}(o,w) zⁿ` over paths
/// that can still reach `w`.
fn free_product_green_by_paths(spec: &Spec, target: &Word, z: f64, n_max: usize) -> f64 {
    let back: Vec<Vec<usize>> = spec
        .factors
        .iter()
        .map(|f| f.distances_to_root().into_iter().map(|d| d.unwrap()).collect())
        .collect();
    let out: Vec<Vec<usize>> = spec
        .factors
        .iter()
        .map(|f| f.root_distances().into_iter().map(|d| d.unwrap()).collect())
        .collect();
    let t = target.letters();
    // lower bound on the number of steps from v to the target
    let distance = |v: &Word| -> usize {
        let l = v.letters();
        let cp = l.iter().zip(t).take_while(|(a, b)| a == b).count();
        let strip: usize = l[cp..].iter().map(|x| back[x.factor()][x.state()]).sum();
        let build: usize = t[cp..].iter().map(|x| out[x.factor()][x.state()]).sum();
        let same_kind = l.len() > cp && t.len() > cp && l[cp].factor() == t[cp].factor();
        if same_kind {
            // the differing letter may move within its factor instead
            let s0 = back[l[cp].factor()][l[cp].state()];
            let b0 = out[t[cp].factor()][t[cp].state()];
            strip - s0 + build - b0 + 1
        } else {
            strip + build
        }
    };
    let mut cur: BTreeMap<Word, f64> = BTreeMap::from([(Word::root(), 1.0)]);
    let mut total = if target.letters().is_empty() { 1.0 } else { 0.0 };
    let mut zn = 1.0;
    for step in 1..=n_max {
        zn *= z;
        let remaining = n_max - step;
        let mut next: BTreeMap<Word, f64> = BTreeMap::new();
        for (w, p) in &cur {
            for (v, q) in transitions(spec, w) {
                if distance(&v) <= remaining {
                    *next.entry(v).or_default() += p * q;
                }
            }
        }
        total += zn * next.get(target).copied().unwrap_or(0.0);
        cur = next;
    }
    total
}

#[test]
fn free_product_green_factorizes_over_letters() {
    // G(o, x₁⋯x_k | z) = G(o,o|z) Π L_{τ(x_i)}(o, x_i | ξ_{τ(x_i)}(z))
    let spec = two_factor_example();
    let z = 0.5;
    let n_max = 40; // tail below z^{41}/(1−z) ≈ 1e-12
    let sol = solve_xi(&spec, z).unwrap();
    let g_oo = free_product_root_green(&spec, z).unwrap();
    let words = [
        vec![],
        vec![(0, 1)],
        vec![(1, 3)],
        vec![(0, 2), (1, 1)],
        vec![(1, 2), (0, 1), (1, 3)],
    ];
    for w in words {
        let word = Word(w.iter().map(|&(i, x)| Letter::new(i, x)).collect());
        let product: f64 = w.iter().map(|&(i, x)| sol.caches[i].last_visit(0, x)).product();
        let want = g_oo * product;
        let got = free_product_green_by_paths(&spec, &word, z, n_max);
        assert!((got - want).abs() < 1e-10 * want.max(1.0), "{w:?}: {got} vs {want}");
    }
}
