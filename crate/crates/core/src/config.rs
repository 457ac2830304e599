//! Line-oriented configuration format.
//!
//! ```text
//! # comments run to end of line; `;` separates statements on one line
//! [factor X1]
//! states = o1 g1 g2        # first state is the root
//! edge o1 g1 1
//! edge g1 g2 1
//! edge g2 g1 1/2; edge g2 o1 0.5
//!
//! [product]
//! alphas = 1/2 1/2
//!
//! [run]                    # optional
//! walkers = 10000
//! horizon = 10000
//! seed = 7
//! tol = 1e-6
//! ```
//!
//! Probabilities are decimals or fractions `p/q` and are parsed exactly, so
//! row sums of fractional input are checked without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorChain;
use crate::linalg::DenseMatrix;
use crate::product::FreeProductSpec;

/// Optional `[run]` settings; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOverrides {
    pub walkers: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub exact: FreeProductSpec<BigRational>,
    pub spec: FreeProductSpec<f64>,
    pub run: RunOverrides,
}

/// Parses an exact probability: `p/q`, an integer or a decimal with optional
/// exponent.
pub fn parse_probability(token: &str) -> Option<BigRational> {
    if let Some((n, d)) = token.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match token.find(['e', 'E']) {
        Some(k) => (&token[..k], token[k + 1..].parse::<i32>().ok()?),
        None => (token, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    let (sign, int_digits) = match int_part.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, int_part.strip_prefix('+').unwrap_or(int_part)),
    };
    if !digits_ok(int_digits) || !digits_ok(frac_part) {
        return None;
    }
    let all: String = format!("{int_digits}{frac_part}");
    let numer: BigInt = if all.is_empty() {
        BigInt::zero()
    } else {
        all.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(if sign < 0 { -value } else { value })
}

struct FactorDraft {
    name: String,
    line: usize,
    states: Option<Vec<String>>,
    edges: Vec<(String, String, BigRational, usize, usize)>,
}

enum Section {
    None,
    Factor(usize),
    Product,
    Run,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Strict parse without the validation step.
pub fn parse_config_unvalidated(text: &str) -> Result<(FreeProductSpec<BigRational>, RunOverrides)> {
    let mut factors: Vec<FactorDraft> = Vec::new();
    let mut alphas: Option<(Vec<BigRational>, usize)> = None;
    let mut run = RunOverrides::default();
    let mut section = Section::None;
    let mut saw_product = false;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut offset = 0;
        for stmt in content.split(';') {
            let stmt_offset = offset;
            offset += stmt.len() + 1;
            let lead = stmt.len() - stmt.trim_start().len();
            let col = stmt_offset + lead + 1;
            let stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            if let Some(header) = stmt.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| perr(line_no, col, "unterminated section header"))?
                    .trim();
                let mut parts = header.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("factor"), Some(name), None) => {
                        if factors.iter().any(|f| f.name == name) {
                            return Err(perr(line_no, col, format!("duplicate factor {name}")));
                        }
                        factors.push(FactorDraft {
                            name: name.to_string(),
                            line: line_no,
                            states: None,
                            edges: Vec::new(),
                        });
                        section = Section::Factor(factors.len() - 1);
                    }
                    (Some("product"), None, None) => {
                        if saw_product {
                            return Err(perr(line_no, col, "duplicate [product] section"));
                        }
                        saw_product = true;
                        section = Section::Product;
                    }
                    (Some("run"), None, None) => section = Section::Run,
                    _ => return Err(perr(line_no, col, format!("unknown section [{header}]"))),
                }
                continue;
            }
            let (key, rest) = split_statement(stmt);
            let rest_col = col + stmt.len() - rest.len();
            match (&section, key) {
                (Section::Factor(k), "states") => {
                    let f = &mut factors[*k];
                    if f.states.is_some() {
                        return Err(perr(line_no, col, "states declared twice"));
                    }
                    let names: Vec<String> = rest
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect();
                    if names.is_empty() {
                        return Err(perr(line_no, rest_col, "empty state list"));
                    }
                    for (i, n) in names.iter().enumerate() {
                        if names[..i].contains(n) {
                            return Err(perr(line_no, rest_col, format!("duplicate state {n}")));
                        }
                    }
                    f.states = Some(names);
                }
                (Section::Factor(k), "edge") => {
                    let toks: Vec<&str> = rest.split_whitespace().collect();
                    if toks.len() != 3 {
                        return Err(perr(line_no, rest_col, "expected `edge <from> <to> <prob>`"));
                    }
                    let p = parse_probability(toks[2])
                        .ok_or_else(|| perr(line_no, rest_col, format!("bad probability {}", toks[2])))?;
                    factors[*k]
                        .edges
                        .push((toks[0].to_string(), toks[1].to_string(), p, line_no, rest_col));
                }
                (Section::Product, "alphas") => {
                    let vals = rest
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .map(|t| parse_probability(t).ok_or_else(|| perr(line_no, rest_col, format!("bad weight {t}"))))
                        .collect::<Result<Vec<_>>>()?;
                    alphas = Some((vals, line_no));
                }
                (Section::Run, "walkers") => run.walkers = Some(parse_num(rest, line_no, rest_col)?),
                (Section::Run, "horizon") => run.horizon = Some(parse_num(rest, line_no, rest_col)?),
                (Section::Run, "seed") => run.seed = Some(parse_num(rest, line_no, rest_col)?),
                (Section::Run, "tol") => {
                    let t: f64 = parse_num(rest, line_no, rest_col)?;
                    if !(t > 0.0) {
                        return Err(perr(line_no, rest_col, "tolerance must be positive"));
                    }
                    run.tol = Some(t);
                }
                (Section::None, _) => {
                    return Err(perr(line_no, col, "statement outside of a section"));
                }
                (_, key) => return Err(perr(line_no, col, format!("unknown key `{key}`"))),
            }
        }
    }

    let mut chains = Vec::with_capacity(factors.len());
    for f in &factors {
        let states = f
            .states
            .as_ref()
            .ok_or_else(|| perr(f.line, 1, format!("factor {} has no states", f.name)))?;
        let n = states.len();
        let mut m = DenseMatrix::<BigRational>::zeros(n, n);
        let mut set = vec![false; n * n];
        for (from, to, p, line, col) in &f.edges {
            let idx = |s: &str| {
                states
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| perr(*line, *col, format!("unknown state {s} in factor {}", f.name)))
            };
            let (x, y) = (idx(from)?, idx(to)?);
            if set[x * n + y] {
                return Err(perr(*line, *col, format!("duplicate edge {from} -> {to}")));
            }
            set[x * n + y] = true;
            m[(x, y)] = p.clone();
        }
        chains.push(FactorChain::new(f.name.clone(), states.clone(), m));
    }
    let (alphas, _) = alphas.ok_or_else(|| perr(text.lines().count().max(1), 1, "missing [product] alphas"))?;

    Ok((FreeProductSpec::new_unchecked(chains, alphas), run))
}

/// Strict parse followed by validation of the exact spec.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let (exact, run) = parse_config_unvalidated(text)?;
    let report = exact.validate();
    if !report.is_valid() {
        return Err(Error::Validation(report.all_violations()));
    }
    let spec = exact.map(|p| p.to_f64().unwrap_or(f64::NAN));
    Ok(ParsedConfig { exact, spec, run })
}

fn split_statement(stmt: &str) -> (&str, &str) {
    if let Some((k, v)) = stmt.split_once('=') {
        let k = k.trim();
        if !k.contains(char::is_whitespace) {
            return (k, v.trim());
        }
    }
    match stmt.split_once(char::is_whitespace) {
        Some((k, v)) => (k, v.trim()),
        None => (stmt, ""),
    }
}

fn parse_num<N: std::str::FromStr>(s: &str, line: usize, col: usize) -> Result<N> {
    s.trim()
        .parse()
        .map_err(|_| perr(line, col, format!("invalid number `{}`", s.trim())))
}

/// Renders a spec back into the configuration format (decimal probabilities).
pub fn render_config(spec: &FreeProductSpec<f64>) -> String {
    let mut out = String::new();
    for f in &spec.factors {
        out.push_str(&format!("[factor {}]\nstates = {}\n", f.name, f.labels.join(" ")));
        for x in 0..f.len() {
            for y in 0..f.len() {
                let p = *f.p(x, y);
                if p != 0.0 {
                    out.push_str(&format!("edge {} {} {}\n", f.labels[x], f.labels[y], p));
                }
            }
        }
        out.push('\n');
    }
    let a: Vec<String> = spec.alphas.iter().map(|a| a.to_string()).collect();
    out.push_str(&format!("[product]\nalphas = {}\n", a.join(" ")));
    out
}

/// `1` as an exact probability.
pub fn exact_one() -> BigRational {
    BigRational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[factor A]
states = a0 a1 a2
edge a0 a1 1
edge a1 a2 1; edge a2 a0 1/3
edge a2 a1 0.666666666666666666666666666666666666666666666666667
[factor B]
states = b0, b1
edge b0 b1 1
edge b1 b0 1
[product]
alphas = 1/2 0.5
";

    #[test]
    fn fractions_and_decimals_are_exact() {
        assert_eq!(parse_probability("1/2"), parse_probability("0.5"));
        assert_eq!(parse_probability("25e-2"), parse_probability("1/4"));
        assert_eq!(parse_probability("1"), Some(BigRational::one()));
        assert!(parse_probability("x").is_none());
        assert!(parse_probability("1/0").is_none());
    }

    #[test]
    fn parses_valid_config() {
        let c = parse_config(GOOD).unwrap();
        assert_eq!(c.spec.rank(), 2);
        assert_eq!(c.spec.factors[0].labels, vec!["a0", "a1", "a2"]);
        assert!((c.spec.factors[0].p(2, 0) - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(c.spec.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn malformed_row_sum_is_a_validation_error() {
        let text = GOOD.replace("edge b1 b0 1", "edge b1 b0 0.9");
        match parse_config(&text) {
            Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains("not stochastic"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = GOOD.replace("edge a0 a1 1", "  edje a0 a1 1");
        match parse_config(&text) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_state_and_section_are_rejected() {
        assert!(matches!(
            parse_config(&GOOD.replace("edge a0 a1 1", "edge a0 zz 1")),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_config(&GOOD.replace("[product]", "[produkt]")),
            Err(Error::Parse { line: 10, .. })
        ));
    }

    #[test]
    fn run_section_overrides() {
        let text = format!("{GOOD}[run]\nwalkers = 12\nseed = 3\ntol = 1e-7\n");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.run.walkers, Some(12));
        assert_eq!(c.run.seed, Some(3));
        assert_eq!(c.run.tol, Some(1e-7));
    }

    #[test]
    fn render_round_trips() {
        let c = parse_config(GOOD).unwrap();
        let again = parse_config(&render_config(&c.spec)).unwrap();
        assert_eq!(again.spec.factors[1], c.spec.factors[1]);
        assert_eq!(again.spec.alphas, c.spec.alphas);
    }
}
