//! Built-in specifications.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::parse_config;
use crate::factor::FactorChain;
use crate::linalg::DenseMatrix;
use crate::product::FreeProductSpec;

/// Two factors on 3 and 4 states with equal weights.
pub const TWO_FACTOR_CONFIG: &str = include_str!("../presets/two-factor.cfg");

/// Preset names accepted by the command line; the first is canonical.
pub const TWO_FACTOR_NAMES: [&str; 2] = ["two-factor", "paper-7.1"];
pub const ZZ2_NAMES: [&str; 2] = ["zz2", "paper-zz2-7.2"];

/// A resolved preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// The finite two-factor example.
    TwoFactor,
    /// Two copies of `ℤ × ℤ/2` with equal weights.
    Zz2,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        if TWO_FACTOR_NAMES.contains(&name) {
            Some(Self::TwoFactor)
        } else if ZZ2_NAMES.contains(&name) {
            Some(Self::Zz2)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoFactor => TWO_FACTOR_NAMES[0],
            Self::Zz2 => ZZ2_NAMES[0],
        }
    }
}

/// The two-factor example as an `f64` spec.
pub fn two_factor_example() -> FreeProductSpec<f64> {
    parse_config(TWO_FACTOR_CONFIG).expect("built-in preset parses").spec
}

/// A random spec with 2–3 factors of 2–5 states each.
///
/// Every state has the edge `x → x+1 (mod n)` plus random extra off-diagonal
/// edges, so each factor is irreducible with zero diagonal. Weights are drawn
/// away from zero. The excluded two-by-two case is redrawn.
pub fn random_spec<R: Rng>(rng: &mut R) -> FreeProductSpec<f64> {
    loop {
        let r = rng.random_range(2..=3);
        let sizes: Vec<usize> = (0..r).map(|_| rng.random_range(2..=5)).collect();
        if r == 2 && sizes.iter().all(|&n| n == 2) {
            continue;
        }
        let factors = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut p = DenseMatrix::zeros(n, n);
                for x in 0..n {
                    let mut w = vec![0.0; n];
                    w[(x + 1) % n] = rng.random_range(0.1..1.0);
                    for (y, wy) in w.iter_mut().enumerate() {
                        if y != x && y != (x + 1) % n && rng.random_bool(0.5) {
                            *wy = rng.random_range(0.1..1.0);
                        }
                    }
                    let s: f64 = w.iter().sum();
                    for y in 0..n {
                        p[(x, y)] = w[y] / s;
                    }
                }
                let name = format!("F{}", i + 1);
                let labels = (0..n).map(|k| format!("{name}s{k}")).collect();
                FactorChain::new(name, labels, p)
            })
            .collect();
        let raw: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut alphas: Vec<f64> = raw.iter().map(|a| a / total).collect();
        // make the weights sum to one exactly in floating point
        let head: f64 = alphas[..r - 1].iter().sum();
        alphas[r - 1] = 1.0 - head;
        if let Ok(spec) = FreeProductSpec::new(factors, alphas) {
            return spec;
        }
    }
}

/// [`random_spec`] from a seed.
pub fn random_spec_seeded(seed: u64) -> FreeProductSpec<f64> {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_resolve() {
        assert_eq!(Preset::from_name("paper-7.1"), Some(Preset::TwoFactor));
        assert_eq!(Preset::from_name("zz2"), Some(Preset::Zz2));
        assert_eq!(Preset::from_name("nope"), None);
    }

    #[test]
    fn two_factor_shape() {
        let spec = two_factor_example();
        assert_eq!(spec.factors[0].len(), 3);
        assert_eq!(spec.factors[1].len(), 4);
        assert_eq!(*spec.factors[1].p(2, 0), 0.5);
    }

    #[test]
    fn random_specs_are_valid_and_reproducible() {
        for seed in 0..50 {
            let s = random_spec_seeded(seed);
            assert!(s.validate().is_valid());
            assert_eq!(s, random_spec_seeded(seed));
        }
    }
}
