//! End-to-end orchestration: parse, validate, solve, build the chains,
//! compute entropies and growth, optionally simulate, and collect checks.
//!
//! Every stage either fills its report section or records the failing stage
//! and stops; later sections stay absent.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{parse_config_unvalidated, RunOverrides};
use crate::entropy::{entropy_v1, entropy_v2, entropy_v3, DgfDerivatives, EntropyTriple};
use crate::error::{Error, Result};
use crate::exit_chain::{build_exit_chain, build_type_chain, c_h, rate_of_escape_block, ChValue, TypeChain, CHAIN_TOL};
use crate::factor::{identity_residuals, IdentityResiduals};
use crate::group::finite::FiniteGroupFactor;
use crate::group::zz2::{solve_zz2_xi, Zz2Factor};
use crate::group::{entropy_groups, solve_group_xi, GroupEntropyReport, GROUP_MAX_SHELLS, GROUP_REL_TOL};
use crate::growth::{check_inequalities, growth_report, GrowthReport, InequalityReport};
use crate::presets::{Preset, TWO_FACTOR_CONFIG};
use crate::product::{FreeProductSpec, SpecValidation};
use crate::scalar::rel_gap;
use crate::sim::{
    certified_horizon, empirical_distribution, enumerate_distribution, estimate_drifts, return_probabilities,
    run_walkers, total_variation, LetterWeights, SimEstimates, SimParams, ENUMERATION_LIMIT,
};
use crate::xi::{
    certify_transience, diagonal_green_bound, exit_mass, free_product_root_green, solve_xi, xi_derivative, XiOptions,
    XiSolution, TRANSIENCE_DELTA,
};

/// Where the spec comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecSource {
    Preset(Preset),
    File(PathBuf),
    /// Configuration text given directly.
    Inline(String),
}

impl SpecSource {
    fn describe(&self) -> String {
        match self {
            Self::Preset(p) => format!("preset:{}", p.name()),
            Self::File(p) => format!("file:{}", p.display()),
            Self::Inline(_) => "inline".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Parse and validate, then run the transience gate.
    Validate,
    /// Full analytic pipeline; simulates when walkers or a horizon are given.
    Analyze,
    /// Analytic pipeline when possible, then simulation.
    Simulate,
    /// Growth rates and inequalities.
    Growth,
    /// Exact enumeration and Green partial sums against the analytic values.
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Analyze => "analyze",
            Self::Simulate => "simulate",
            Self::Growth => "growth",
            Self::Oracle => "oracle",
        }
    }
}

/// Numeric tolerances of the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Maximum relative spread between independent routes to one quantity.
    pub agreement: f64,
    /// Maximum residual of an identity or fixed-point equation.
    pub residual: f64,
    /// Number of standard errors allowed for Monte Carlo comparisons.
    pub stderr_multiple: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            agreement: 1e-6,
            residual: CHAIN_TOL,
            stderr_multiple: 3.0,
        }
    }
}

pub const DEFAULT_WALKERS: usize = 10_000;
pub const DEFAULT_HORIZON: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GROWTH_DEPTH: usize = 12;
pub const ORACLE_HORIZON: usize = 6;
pub const ORACLE_WALKERS: usize = 1_000_000;
pub const ORACLE_Z: f64 = 0.5;
pub const ORACLE_GREEN_TOL: f64 = 1e-8;
pub const EXIT_TV_TOL: f64 = 0.01;
pub const EXIT_TV_MIN_TRANSITIONS: u64 = 100_000;
pub const ORACLE_TV_TOL: f64 = 0.005;
/// Relative gap allowed between `λ₁` and the BFS sphere ratio.
pub const METRIC_RATIO_TOL: f64 = 0.02;
/// Size of the finite cyclic approximation used to cross-check the group preset.
pub const FINITE_APPROX_ORDER: usize = 41;

/// Everything needed to run the pipeline. `None` fields fall back to the
/// configuration's `[run]` section, then to the defaults above.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: SpecSource,
    pub command: Command,
    pub tolerances: Tolerances,
    pub walkers: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub parallel: bool,
    pub growth_depth: usize,
}

impl RunConfig {
    pub fn new(source: SpecSource, command: Command) -> Self {
        Self {
            source,
            command,
            tolerances: Tolerances::default(),
            walkers: None,
            horizon: None,
            seed: None,
            parallel: true,
            growth_depth: DEFAULT_GROWTH_DEPTH,
        }
    }

    pub fn check(&self) -> Result<()> {
        let t = &self.tolerances;
        let mut bad = Vec::new();
        for (name, v) in [
            ("agreement", t.agreement),
            ("residual", t.residual),
            ("stderr multiple", t.stderr_multiple),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} tolerance must be positive, got {v}"));
            }
        }
        if self.walkers.is_some_and(|w| w < 2) {
            bad.push("at least 2 walkers are needed for standard errors".into());
        }
        if self.horizon == Some(0) {
            bad.push("horizon must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Parse,
    Validate,
    Transience,
    Xi,
    Chains,
    Entropy,
    Growth,
    Simulate,
    Oracle,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Internal identity or agreement between independent routes.
    Invariant,
    /// Comparison with a published reference value of a built-in preset.
    Reference,
    /// Statistical comparison with a Monte Carlo estimate.
    MonteCarlo,
    /// Comparison with an exact enumeration.
    Oracle,
}

/// One pass/fail verdict: `passed` iff `value ≤ tolerance`, where `value` is
/// a residual, a gap or `|estimate − target|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    pub tolerance: f64,
    /// Reference value for comparisons.
    pub target: Option<f64>,
    /// Quantity compared with `target`.
    pub observed: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn bound(name: &str, kind: CheckKind, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
            tolerance,
            target: None,
            observed: None,
            passed: value <= tolerance,
        }
    }

    pub fn near(name: &str, kind: CheckKind, observed: f64, target: f64, tolerance: f64) -> Self {
        let value = (observed - target).abs();
        Self {
            name: name.into(),
            kind,
            value,
            tolerance,
            target: Some(target),
            observed: Some(observed),
            passed: value <= tolerance,
        }
    }

    pub fn flag(name: &str, kind: CheckKind, ok: bool) -> Self {
        Self {
            name: name.into(),
            kind,
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            target: None,
            observed: None,
            passed: ok,
        }
    }
}

/// The spec as analysed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEcho {
    pub factors: Vec<FactorEcho>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEcho {
    pub name: String,
    pub states: Vec<String>,
    pub transitions: Vec<Vec<f64>>,
}

impl SpecEcho {
    fn of(spec: &FreeProductSpec<f64>) -> Self {
        Self {
            factors: spec
                .factors
                .iter()
                .map(|f| FactorEcho {
                    name: f.name.clone(),
                    states: f.labels.clone(),
                    transitions: f.transitions().to_rows(),
                })
                .collect(),
            alphas: spec.alphas.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiSummary {
    pub xi: Vec<f64>,
    pub xi_prime: Vec<f64>,
    /// Fixed-point residuals.
    pub residuals: Vec<f64>,
    /// Max relative gap between `ξ'` and central differences at `1 ± 1e-5`.
    pub xi_prime_fd_gap: f64,
    pub iterations: usize,
    /// `H̄_i(1) = 1 − α_i/ξ_i`.
    pub h_bar: Vec<f64>,
    /// `G_i(o_i,o_i|ξ_i)`.
    pub root_green: Vec<f64>,
    /// Identity residuals of each factor at `ξ_i`.
    pub identities: Vec<IdentityResiduals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSummary {
    pub row_residual: f64,
    pub stationarity_residual: f64,
    pub type_gap: f64,
    /// `π(g,i)`.
    pub pi: Vec<Vec<f64>>,
    /// `−log L_i(o_i,g|ξ_i)`.
    pub letter_lengths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    #[serde(flatten)]
    pub values: EntropyTriple<f64>,
    pub dgf: DgfDerivatives<f64>,
}

/// Relation between the Greenian distance `−log F(o,x|1)` and the letter
/// length `l(x) = Σ −log L`: their difference `log G(x,x) − log G(o,o)` lies in
/// `[offset_lower, offset_upper]` for every word, so both drifts equal `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenianSummary {
    /// `G(o,o|1)`.
    pub root_green: f64,
    /// Uniform bound on `G(x,x|1)`.
    pub diagonal_green_bound: f64,
    pub offset_lower: f64,
    pub offset_upper: f64,
    /// Drift of the per-letter length `Σ −log F_i(o_i,x_k|ξ_i)`; not a
    /// Greenian distance and in general different from `h`.
    pub ell_f_letters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub walkers: usize,
    pub horizon: usize,
    pub seed: u64,
    pub estimates: SimEstimates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub horizon: usize,
    pub walkers: usize,
    pub seed: u64,
    pub support: usize,
    pub total_variation: f64,
    /// Green argument of the partial-sum check.
    pub z: f64,
    pub certified_terms: usize,
    /// `Σ_{n≤N} p^{(n)}(o,o) zⁿ`.
    pub partial_sum: f64,
    /// `G(o,o|z)` from the factor formulas.
    pub green: f64,
    pub gap: f64,
    /// Whether the partial sums never exceed `G` and increase with `N`.
    pub monotone_below: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub xi: f64,
    /// `ξ` from the generic fixed-point iteration over group factors.
    pub xi_iterated: f64,
    pub xi_residual: f64,
    pub fhat: f64,
    pub fhat_a: f64,
    pub fhat_b: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub f_c: f64,
    pub root_green: f64,
    pub half_space_residual: f64,
    pub linear_residual: f64,
    pub level_residual: f64,
    pub bound_sandwich_holds: bool,
    pub entropy: GroupEntropyReport,
    /// Entropy of the same walk with `ℤ` replaced by `ℤ/m`, by the finite
    /// pipeline.
    pub finite_approximation: Option<FiniteApproximation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteApproximation {
    pub order: usize,
    pub xi: f64,
    pub h: f64,
}

/// Full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: String,
    pub command: Command,
    pub source: String,
    pub failure: Option<StageFailure>,
    pub spec: Option<SpecEcho>,
    pub validation: Option<SpecValidation>,
    /// Certified lower bound `1 + δ` on the radius of convergence.
    pub r_gate: Option<f64>,
    pub xi: Option<XiSummary>,
    pub type_chain: Option<TypeChain<f64>>,
    pub exit_chain: Option<ExitSummary>,
    pub ell0: Option<f64>,
    pub c_h: Option<ChValue<f64>>,
    pub entropy: Option<EntropySummary>,
    pub greenian: Option<GreenianSummary>,
    pub growth: Option<GrowthReport>,
    pub inequalities: Option<InequalityReport>,
    pub simulation: Option<SimulationSummary>,
    pub oracle: Option<OracleSummary>,
    pub group: Option<GroupSummary>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timing: BTreeMap<String, f64>,
}

impl AnalysisReport {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            command: cfg.command,
            source: cfg.source.describe(),
            failure: None,
            spec: None,
            validation: None,
            r_gate: None,
            xi: None,
            type_chain: None,
            exit_chain: None,
            ell0: None,
            c_h: None,
            entropy: None,
            greenian: None,
            growth: None,
            inequalities: None,
            simulation: None,
            oracle: None,
            group: None,
            checks: Vec::new(),
            timing: BTreeMap::new(),
        }
    }

    /// True iff no stage failed and every check passed.
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Copy with the timing cleared, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: BTreeMap::new(),
            ..self.clone()
        }
    }

    fn fail(&mut self, stage: Stage, e: &Error) {
        self.failure = Some(StageFailure {
            stage,
            message: e.to_string(),
        });
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }
}

/// Published values for the built-in presets, with their tolerances.
pub fn reference_values(preset: Preset) -> &'static [(&'static str, f64, f64)] {
    match preset {
        Preset::TwoFactor => &[
            ("ell0", 0.41563, 1e-4),
            ("h_v1", 0.32005, 1e-4),
            ("h_v2", 0.32005, 1e-4),
            ("h_v3", 0.32005, 1e-4),
        ],
        Preset::Zz2 => &[("xi", 0.55973, 1e-4), ("fhat", 0.24291, 1e-4), ("h", 1.14985, 1e-3)],
    }
}

struct Timer {
    start: Instant,
}

impl Timer {
    fn start() -> Self {
        Self { start: Instant::now() }
    }

    fn lap(&mut self, report: &mut AnalysisReport, stage: &str) {
        let now = Instant::now();
        *report.timing.entry(stage.into()).or_default() += (now - self.start).as_secs_f64();
        self.start = now;
    }
}

/// Analytic results kept for the later stages.
struct Analytic {
    sol: XiSolution<f64>,
    kernel: crate::exit_chain::ExitChainKernel<f64>,
    ell0: f64,
    h: f64,
    h_q: f64,
    /// `ℓ₀ Σ π(g,i) (−log F_i(o_i,g|ξ_i))`: drift of the per-letter F-length.
    ell_f_letters: f64,
}

/// Runs the configured command. Errors are recorded in the report, never
/// returned.
pub fn run_pipeline(cfg: &RunConfig) -> AnalysisReport {
    let total = Instant::now();
    let mut report = AnalysisReport::new(cfg);
    let mut timer = Timer::start();
    if let Err(e) = cfg.check() {
        report.fail(Stage::Config, &e);
        return report;
    }
    let text = match &cfg.source {
        SpecSource::Preset(Preset::Zz2) => {
            run_group_preset(cfg, &mut report, &mut timer);
            report.timing.insert("total".into(), total.elapsed().as_secs_f64());
            return report;
        }
        SpecSource::Preset(Preset::TwoFactor) => TWO_FACTOR_CONFIG.to_string(),
        SpecSource::Inline(t) => t.clone(),
        SpecSource::File(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                report.fail(Stage::Parse, &Error::from(e));
                return report;
            }
        },
    };
    run_finite(cfg, &text, &mut report, &mut timer);
    report.timing.insert("total".into(), total.elapsed().as_secs_f64());
    report
}

fn run_finite(cfg: &RunConfig, text: &str, report: &mut AnalysisReport, timer: &mut Timer) {
    let (exact, overrides) = match parse_config_unvalidated(text) {
        Ok(v) => v,
        Err(e) => return report.fail(Stage::Parse, &e),
    };
    timer.lap(report, "parse");
    let validation = exact.validate();
    let valid = validation.is_valid();
    report.validation = Some(validation.clone());
    report.push(Check::flag("spec_valid", CheckKind::Invariant, valid));
    if !valid {
        return report.fail(Stage::Validate, &Error::Validation(validation.all_violations()));
    }
    let spec: FreeProductSpec<f64> = exact.map(|p| num_traits::ToPrimitive::to_f64(p).unwrap_or(f64::NAN));
    report.spec = Some(SpecEcho::of(&spec));
    let tol = Tolerances {
        agreement: overrides.tol.unwrap_or(cfg.tolerances.agreement),
        ..cfg.tolerances
    };
    timer.lap(report, "validate");

    let gate = certify_transience(&spec, TRANSIENCE_DELTA);
    timer.lap(report, "transience");
    match (&gate, cfg.command) {
        (Ok(r), _) => report.r_gate = Some(*r),
        (Err(e), Command::Simulate) => {
            // degraded mode: simulate without analytic targets
            report.push(Check::flag("transience_gate", CheckKind::Invariant, false));
            report.failure = Some(StageFailure {
                stage: Stage::Transience,
                message: format!("{e}; analytic stages skipped"),
            });
            simulate(cfg, &overrides, &spec, None, tol, report, timer);
            return;
        }
        (Err(e), _) => {
            report.push(Check::flag("transience_gate", CheckKind::Invariant, false));
            return report.fail(Stage::Transience, e);
        }
    }
    report.push(Check::flag("transience_gate", CheckKind::Invariant, true));
    if cfg.command == Command::Validate {
        return;
    }

    let analytic = match analytic_stages(&spec, tol, report, timer) {
        Ok(a) => a,
        Err((stage, e)) => return report.fail(stage, &e),
    };
    if let SpecSource::Preset(p) = cfg.source {
        for &(name, target, t) in reference_values(p) {
            let observed = match name {
                "ell0" => analytic.ell0,
                "h_v1" => report.entropy.as_ref().map_or(f64::NAN, |e| e.values.h_v1),
                "h_v2" => report.entropy.as_ref().map_or(f64::NAN, |e| e.values.h_v2),
                "h_v3" => report.entropy.as_ref().map_or(f64::NAN, |e| e.values.h_v3),
                _ => continue,
            };
            report.push(Check::near(
                &format!("reference_{name}"),
                CheckKind::Reference,
                observed,
                target,
                t,
            ));
        }
    }

    let wants_growth = matches!(cfg.command, Command::Analyze | Command::Growth);
    if wants_growth {
        match growth_report(&spec, cfg.growth_depth) {
            Ok(g) => {
                growth_checks(&g, tol, report);
                report.growth = Some(g);
            }
            Err(e) => return report.fail(Stage::Growth, &e),
        }
        timer.lap(report, "growth");
    }

    let wants_sim = match cfg.command {
        Command::Simulate => true,
        Command::Analyze | Command::Growth => {
            cfg.walkers.or(overrides.walkers).is_some() || cfg.horizon.or(overrides.horizon).is_some()
        }
        _ => false,
    };
    if wants_sim {
        simulate(cfg, &overrides, &spec, Some(&analytic), tol, report, timer);
    }
    if let Some(g) = &report.growth {
        let ell1 = report
            .simulation
            .as_ref()
            .map(|s| (s.estimates.ell1.value, s.estimates.ell1.stderr));
        let ineq = check_inequalities(analytic.h, analytic.ell0, ell1, g.lambda0, g.lambda1);
        report.push(Check::flag("inequality_block", CheckKind::Invariant, ineq.block_holds));
        if let Some(ok) = ineq.metric_holds {
            report.push(Check::flag("inequality_metric", CheckKind::MonteCarlo, ok));
        }
        report.inequalities = Some(ineq);
    }
    if cfg.command == Command::Oracle {
        if let Err(e) = oracle(cfg, &overrides, &spec, report, timer) {
            report.fail(Stage::Oracle, &e);
        }
    }
}

fn analytic_stages(
    spec: &FreeProductSpec<f64>,
    tol: Tolerances,
    report: &mut AnalysisReport,
    timer: &mut Timer,
) -> std::result::Result<Analytic, (Stage, Error)> {
    let sol = solve_xi(spec, 1.0).map_err(|e| (Stage::Xi, e))?;
    let identities = spec
        .factors
        .iter()
        .zip(&sol.caches)
        .map(|(f, c)| identity_residuals(f, c))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| (Stage::Xi, e))?;
    let fd_gap = xi_fd_gap(spec, &sol).map_err(|e| (Stage::Xi, e))?;
    let r = spec.rank();
    report.xi = Some(XiSummary {
        xi: sol.xi.clone(),
        xi_prime: sol.xi_prime.clone(),
        residuals: sol.residuals.clone(),
        xi_prime_fd_gap: fd_gap,
        iterations: sol.iterations,
        h_bar: (0..r).map(|i| sol.h_bar(&spec.alphas, i)).collect(),
        root_green: (0..r).map(|i| sol.root_green(i)).collect(),
        identities: identities.clone(),
    });
    report.push(Check::bound(
        "xi_residual",
        CheckKind::Invariant,
        sol.max_residual(),
        1e-12,
    ));
    report.push(Check::flag(
        "xi_in_unit_interval",
        CheckKind::Invariant,
        sol.xi.iter().all(|&x| x > 0.0 && x < 1.0),
    ));
    report.push(Check::flag(
        "xi_prime_positive",
        CheckKind::Invariant,
        sol.xi_prime.iter().all(|&x| x > 0.0),
    ));
    report.push(Check::bound(
        "xi_prime_vs_finite_difference",
        CheckKind::Invariant,
        fd_gap,
        1e-6,
    ));
    let worst = |f: fn(&IdentityResiduals) -> f64| identities.iter().map(f).fold(0.0, f64::max);
    report.push(Check::bound(
        "resolvent_residual",
        CheckKind::Invariant,
        worst(|r| r.resolvent),
        tol.residual,
    ));
    report.push(Check::bound(
        "green_row_sum",
        CheckKind::Invariant,
        worst(|r| r.row_sum),
        tol.residual,
    ));
    report.push(Check::bound(
        "factorization_first_visit",
        CheckKind::Invariant,
        worst(|r| r.factorization_first),
        tol.residual,
    ));
    report.push(Check::bound(
        "factorization_last_visit",
        CheckKind::Invariant,
        worst(|r| r.factorization_last),
        tol.residual,
    ));
    report.push(Check::bound(
        "sum_last_visit",
        CheckKind::Invariant,
        worst(|r| r.sum_last_visit),
        tol.residual,
    ));
    let exit_gap = (0..r)
        .map(|j| {
            let l: f64 = (1..spec.factors[j].len()).map(|h| sol.caches[j].last_visit(0, h)).sum();
            (exit_mass(sol.xi[j], &sol.caches[j]) - l).abs()
        })
        .fold(0.0, f64::max);
    report.push(Check::bound(
        "exit_mass_identity",
        CheckKind::Invariant,
        exit_gap,
        tol.residual,
    ));
    timer.lap(report, "xi");

    let tc = build_type_chain(spec, &sol).map_err(|e| (Stage::Chains, e))?;
    let kernel = build_exit_chain(spec, &sol, &tc).map_err(|e| (Stage::Chains, e))?;
    report.push(Check::bound(
        "type_chain_row_sum",
        CheckKind::Invariant,
        tc.row_residual,
        tol.residual,
    ));
    report.push(Check::bound(
        "type_chain_stationarity",
        CheckKind::Invariant,
        tc.stationarity_residual,
        tol.residual,
    ));
    report.push(Check::bound(
        "type_stationary_two_routes",
        CheckKind::Invariant,
        tc.nu_gap,
        tol.residual,
    ));
    report.push(Check::bound(
        "exit_chain_row_sum",
        CheckKind::Invariant,
        kernel.row_residual,
        tol.residual,
    ));
    report.push(Check::bound(
        "exit_chain_stationarity",
        CheckKind::Invariant,
        kernel.stationarity_residual,
        tol.residual,
    ));
    report.push(Check::bound(
        "exit_chain_type_marginal",
        CheckKind::Invariant,
        kernel.type_gap,
        tol.residual,
    ));
    report.exit_chain = Some(ExitSummary {
        row_residual: kernel.row_residual,
        stationarity_residual: kernel.stationarity_residual,
        type_gap: kernel.type_gap,
        pi: kernel.pi.clone(),
        letter_lengths: kernel.lengths.clone(),
    });
    report.type_chain = Some(tc.clone());
    timer.lap(report, "chains");

    let ell0 = rate_of_escape_block(spec, &sol, &tc);
    let ch = c_h(spec, &sol, &tc, &kernel);
    let h1 = entropy_v1(ell0, ch.formula);
    let (h2, hq) = entropy_v2(ell0, &kernel);
    let (h3, dgf) = entropy_v3(spec, &sol).map_err(|e| (Stage::Entropy, e))?;
    let triple = EntropyTriple::new(h1, h2, h3, hq);
    report.push(Check::bound(
        "c_h_two_routes",
        CheckKind::Invariant,
        rel_gap(ch.formula, ch.via_pi),
        tol.agreement,
    ));
    report.push(Check::bound(
        "entropy_three_routes",
        CheckKind::Invariant,
        triple.spread,
        tol.agreement,
    ));
    report.push(Check::flag(
        "entropy_positive",
        CheckKind::Invariant,
        triple.all_positive(),
    ));
    report.ell0 = Some(ell0);
    report.c_h = Some(ch);
    report.entropy = Some(EntropySummary { values: triple, dgf });
    timer.lap(report, "entropy");
    let weights = LetterWeights::new(spec, &sol, &kernel);
    let ell_f_letters = ell0
        * kernel
            .pi
            .iter()
            .zip(&weights.f_length)
            .map(|(p, f)| p.iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>();
    let bound = diagonal_green_bound(spec, &sol);
    let g_oo = free_product_root_green(spec, 1.0).map_err(|e| (Stage::Entropy, e))?;
    report.greenian = Some(GreenianSummary {
        root_green: g_oo,
        diagonal_green_bound: bound,
        offset_lower: -g_oo.ln(),
        offset_upper: (bound / g_oo).ln(),
        ell_f_letters,
    });
    report.push(Check::flag(
        "greenian_offset_bounded",
        CheckKind::Invariant,
        bound.is_finite() && bound >= g_oo && g_oo >= 1.0,
    ));
    Ok(Analytic {
        sol,
        kernel,
        ell0,
        h: h1,
        h_q: hq,
        ell_f_letters,
    })
}

/// Max relative gap between `ξ'(1)` and central differences at `1 ± 1e-5`.
fn xi_fd_gap(spec: &FreeProductSpec<f64>, sol: &XiSolution<f64>) -> Result<f64> {
    let d = 1e-5;
    let hi = solve_xi(spec, 1.0 + d)?;
    let lo = solve_xi(spec, 1.0 - d)?;
    let implicit = xi_derivative(spec, sol)?;
    Ok(implicit
        .iter()
        .enumerate()
        .map(|(i, &a)| rel_gap(a, (hi.xi[i] - lo.xi[i]) / (2.0 * d)))
        .fold(0.0, f64::max))
}

fn growth_checks(g: &GrowthReport, tol: Tolerances, report: &mut AnalysisReport) {
    report.push(Check::bound(
        "lambda0_residual",
        CheckKind::Invariant,
        g.lambda0_residual,
        tol.residual,
    ));
    report.push(Check::bound(
        "lambda1_residual",
        CheckKind::Invariant,
        g.lambda1_residual,
        tol.residual,
    ));
    report.push(Check::flag(
        "cone_paths_match_spheres",
        CheckKind::Oracle,
        g.sphere_counts_cone.starts_with(&g.sphere_counts_metric),
    ));
    if let Some(gap) = g.metric_ratio_gap {
        report.push(Check::bound(
            "lambda1_vs_sphere_ratio",
            CheckKind::Oracle,
            gap,
            METRIC_RATIO_TOL,
        ));
    }
}

fn simulate(
    cfg: &RunConfig,
    overrides: &RunOverrides,
    spec: &FreeProductSpec<f64>,
    analytic: Option<&Analytic>,
    tol: Tolerances,
    report: &mut AnalysisReport,
    timer: &mut Timer,
) {
    let params = SimParams {
        walkers: cfg.walkers.or(overrides.walkers).unwrap_or(DEFAULT_WALKERS),
        horizon: cfg.horizon.or(overrides.horizon).unwrap_or(DEFAULT_HORIZON),
        seed: cfg.seed.or(overrides.seed).unwrap_or(DEFAULT_SEED),
        parallel: cfg.parallel,
        keep_records: false,
    };
    if params.walkers < 2 {
        return report.fail(
            Stage::Simulate,
            &Error::Validation(vec!["at least 2 walkers are needed for standard errors".into()]),
        );
    }
    let weights = match analytic {
        Some(a) => LetterWeights::new(spec, &a.sol, &a.kernel),
        None => LetterWeights::metric_only(spec),
    };
    let run = run_walkers(spec, &weights, params);
    let est = estimate_drifts(&run, analytic.map(|a| &a.kernel));
    if let Some(a) = analytic {
        let k = tol.stderr_multiple;
        let mc = |e: &crate::sim::SimEstimate, target: f64| {
            Check::near(
                &format!("mc_{}", e.estimator),
                CheckKind::MonteCarlo,
                e.value,
                target,
                k * e.stderr,
            )
        };
        let mut checks = vec![mc(&est.ell0, a.ell0)];
        if let Some(e) = &est.ell {
            checks.push(mc(e, a.h));
        }
        if let Some(e) = &est.ell_f {
            checks.push(mc(e, a.ell_f_letters));
        }
        if let Some(e) = &est.h_q {
            checks.push(mc(e, a.h_q));
        }
        for (i, (&n, &tv)) in est.exit_transitions.iter().zip(&est.exit_tv).enumerate() {
            if n >= EXIT_TV_MIN_TRANSITIONS {
                checks.push(Check::bound(
                    &format!("mc_exit_kernel_tv_type{}", i + 1),
                    CheckKind::MonteCarlo,
                    tv,
                    EXIT_TV_TOL,
                ));
            }
        }
        for c in checks {
            report.push(c);
        }
    }
    report.simulation = Some(SimulationSummary {
        walkers: params.walkers,
        horizon: params.horizon,
        seed: params.seed,
        estimates: est,
    });
    timer.lap(report, "simulate");
}

fn oracle(
    cfg: &RunConfig,
    overrides: &RunOverrides,
    spec: &FreeProductSpec<f64>,
    report: &mut AnalysisReport,
    timer: &mut Timer,
) -> Result<()> {
    let horizon = cfg.horizon.unwrap_or(ORACLE_HORIZON);
    let walkers = cfg.walkers.unwrap_or(ORACLE_WALKERS);
    let seed = cfg.seed.or(overrides.seed).unwrap_or(DEFAULT_SEED);
    let exact = enumerate_distribution(spec, horizon, ENUMERATION_LIMIT)?;
    let counts = empirical_distribution(spec, horizon, walkers, seed, cfg.parallel);
    let tv = total_variation(&exact.probabilities, &counts);
    report.push(Check::bound(
        "oracle_total_variation",
        CheckKind::Oracle,
        tv,
        ORACLE_TV_TOL,
    ));
    report.push(Check::bound(
        "oracle_mass",
        CheckKind::Invariant,
        (exact.total_mass() - 1.0).abs(),
        cfg.tolerances.residual,
    ));
    timer.lap(report, "oracle_distribution");

    let z = ORACLE_Z;
    let n = certified_horizon(z, ORACLE_GREEN_TOL);
    let returns = return_probabilities(spec, n, ENUMERATION_LIMIT)?;
    let green = free_product_root_green(spec, z)?;
    let mut partial = 0.0;
    let mut zn = 1.0;
    let mut monotone_below = true;
    for p in &returns {
        let next = partial + p * zn;
        monotone_below &= next >= partial && next <= green + 1e-15;
        partial = next;
        zn *= z;
    }
    let gap = green - partial;
    report.push(Check::bound(
        "oracle_green_partial_sum",
        CheckKind::Oracle,
        gap.abs(),
        ORACLE_GREEN_TOL,
    ));
    report.push(Check::flag(
        "oracle_partial_sums_monotone_below",
        CheckKind::Oracle,
        monotone_below,
    ));
    report.oracle = Some(OracleSummary {
        horizon,
        walkers,
        seed,
        support: exact.probabilities.len(),
        total_variation: tv,
        z,
        certified_terms: n,
        partial_sum: partial,
        green,
        gap,
        monotone_below,
    });
    timer.lap(report, "oracle_green");
    Ok(())
}

/// The built-in `ℤ × ℤ/2` preset: two copies with weights `1/2`.
fn run_group_preset(cfg: &RunConfig, report: &mut AnalysisReport, timer: &mut Timer) {
    let alphas = [0.5, 0.5];
    report.spec = Some(SpecEcho {
        factors: ["G1", "G2"]
            .iter()
            .map(|n| FactorEcho {
                name: format!("{n} = Z x Z/2, mu(a)=mu(a^-1)=mu(b)=1/3"),
                states: Vec::new(),
                transitions: Vec::new(),
            })
            .collect(),
        alphas: alphas.to_vec(),
    });
    match cfg.command {
        Command::Validate => {
            report.push(Check::flag("spec_valid", CheckKind::Invariant, true));
            return;
        }
        Command::Analyze => {}
        other => {
            return report.fail(
                Stage::Config,
                &Error::Validation(vec![format!(
                    "command `{}` needs a finite spec; the group preset supports validate and analyze",
                    other.name()
                )]),
            )
        }
    }
    let summary = match group_analysis(&alphas, cfg.tolerances) {
        Ok(s) => s,
        Err(e) => return report.fail(Stage::Group, &e),
    };
    timer.lap(report, "group");
    let t = cfg.tolerances;
    report.push(Check::bound(
        "group_xi_residual",
        CheckKind::Invariant,
        summary.xi_residual,
        1e-10,
    ));
    report.push(Check::bound(
        "group_xi_two_routes",
        CheckKind::Invariant,
        (summary.xi - summary.xi_iterated).abs(),
        1e-9,
    ));
    report.push(Check::bound(
        "group_generating_function_residual",
        CheckKind::Invariant,
        summary
            .half_space_residual
            .max(summary.linear_residual)
            .max(summary.level_residual),
        t.residual,
    ));
    report.push(Check::flag(
        "group_bound_sandwich",
        CheckKind::Invariant,
        summary.bound_sandwich_holds,
    ));
    report.push(Check::bound(
        "group_tail_certified",
        CheckKind::Invariant,
        summary.entropy.tail_bound,
        GROUP_REL_TOL * summary.entropy.h.abs(),
    ));
    report.push(Check::flag(
        "entropy_positive",
        CheckKind::Invariant,
        summary.entropy.h > 0.0,
    ));
    if let Some(fa) = &summary.finite_approximation {
        report.push(Check::bound(
            "group_entropy_vs_finite_approximation",
            CheckKind::Oracle,
            rel_gap(summary.entropy.h, fa.h),
            t.agreement,
        ));
    }
    for &(name, target, tol) in reference_values(Preset::Zz2) {
        let observed = match name {
            "xi" => summary.xi,
            "fhat" => summary.fhat,
            _ => summary.entropy.h,
        };
        report.push(Check::near(
            &format!("reference_{name}"),
            CheckKind::Reference,
            observed,
            target,
            tol,
        ));
    }
    report.group = Some(summary);
}

/// Solves the group preset and cross-checks it against the finite
/// approximation `ℤ/m × ℤ/2`.
pub fn group_analysis(alphas: &[f64], tol: Tolerances) -> Result<GroupSummary> {
    let sol = solve_zz2_xi(alphas)?;
    let factors = [Zz2Factor::new("G1"), Zz2Factor::new("G2")];
    let xi_iterated = solve_group_xi(&factors, alphas, &XiOptions::default())?;
    let entropy = entropy_groups(&factors, alphas, &[sol.xi, sol.xi], GROUP_REL_TOL, GROUP_MAX_SHELLS)?;
    let finite = finite_approximation(alphas, FINITE_APPROX_ORDER, tol)?;
    let e = sol.eval;
    Ok(GroupSummary {
        xi: sol.xi,
        xi_iterated: xi_iterated[0],
        xi_residual: sol.residual,
        fhat: e.fhat,
        fhat_a: e.fhat_a,
        fhat_b: e.fhat_b,
        f_a: e.f_a,
        f_b: e.f_b,
        f_c: e.f_c,
        root_green: e.root_green,
        half_space_residual: e.half_space_residual,
        linear_residual: e.linear_residual,
        level_residual: e.level_residual,
        bound_sandwich_holds: e.bound_sandwich_holds(20),
        entropy,
        finite_approximation: Some(finite),
    })
}

/// Entropy of the free product of two `ℤ/m × ℤ/2` walks by the finite
/// pipeline; converges to the `ℤ × ℤ/2` value geometrically in `m`.
pub fn finite_approximation(alphas: &[f64], m: usize, tol: Tolerances) -> Result<FiniteApproximation> {
    let mu = [((1, 0), 1.0 / 3.0), ((m - 1, 0), 1.0 / 3.0), ((0, 1), 1.0 / 3.0)];
    let factors = ["P", "Q"]
        .iter()
        .map(|n| FiniteGroupFactor::cyclic_times_two(n, m, &mu).to_chain())
        .collect();
    let spec = FreeProductSpec::new(factors, alphas.to_vec())?;
    let sol = solve_xi(&spec, 1.0)?;
    let tc = build_type_chain(&spec, &sol)?;
    let kernel = build_exit_chain(&spec, &sol, &tc)?;
    let ell0 = rate_of_escape_block(&spec, &sol, &tc);
    let ch = c_h(&spec, &sol, &tc, &kernel);
    let h1 = entropy_v1(ell0, ch.formula);
    let (h2, _) = entropy_v2(ell0, &kernel);
    if rel_gap(h1, h2) > tol.agreement {
        return Err(Error::Validation(vec![format!(
            "finite approximation routes disagree: {h1} vs {h2}"
        )]));
    }
    Ok(FiniteApproximation {
        order: m,
        xi: sol.xi[0],
        h: h1,
    })
}
