//! Report emission: text table, JSON and CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{AnalysisReport, Check};
use crate::sim::estimates_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Validation(vec![format!("unknown format `{other}`")])),
        }
    }
}

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub file_name: String,
    pub contents: String,
}

pub const SPHERES_HEADER: &str = "n,block,metric,cone";
pub const SIMULATION_HEADER: &str = "estimator,value,stderr,walkers,horizon,seed";
pub const CHECKS_HEADER: &str = "name,kind,passed,value,tolerance,target,observed";

pub fn to_json(report: &AnalysisReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_json(text: &str) -> Result<AnalysisReport> {
    serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
}

/// Machine-readable failure summary: the failed stage and failing checks.
pub fn failure_json(report: &AnalysisReport) -> String {
    let failed: Vec<&Check> = report.failed_checks();
    serde_json::json!({
        "passed": report.passed(),
        "failure": report.failure,
        "failed_checks": failed,
    })
    .to_string()
}

/// Renders the report in `format`. CSV yields one file per table.
pub fn emit_report(report: &AnalysisReport, format: Format) -> Result<Vec<Emitted>> {
    let one = |name: &str, contents: String| Emitted {
        file_name: name.into(),
        contents,
    };
    Ok(match format {
        Format::Json => vec![one("report.json", to_json(report)? + "\n")],
        Format::Text => vec![one("report.txt", render_text(report))],
        Format::Csv => {
            let mut out = vec![one("checks.csv", checks_csv(&report.checks))];
            if let Some(g) = &report.growth {
                out.push(one(
                    "spheres.csv",
                    spheres_csv(&g.sphere_counts_block, &g.sphere_counts_metric, &g.sphere_counts_cone),
                ));
            }
            if let Some(s) = &report.simulation {
                out.push(one("simulation.csv", estimates_csv(&s.estimates)));
            }
            out
        }
    })
}

/// Writes emitted files into `dir`, creating it if needed.
pub fn write_outputs(files: &[Emitted], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.file_name), &f.contents)?;
    }
    Ok(())
}

pub fn spheres_csv(block: &[u128], metric: &[u128], cone: &[u128]) -> String {
    let mut out = format!("{SPHERES_HEADER}\n");
    let n = block.len().max(metric.len()).max(cone.len());
    let cell = |v: &[u128], k: usize| v.get(k).map(u128::to_string).unwrap_or_default();
    for k in 0..n {
        let _ = writeln!(out, "{k},{},{},{}", cell(block, k), cell(metric, k), cell(cone, k));
    }
    out
}

pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = format!("{CHECKS_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in checks {
        let kind = serde_json::to_value(c.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.name,
            kind,
            c.passed,
            c.value,
            c.tolerance,
            opt(c.target),
            opt(c.observed)
        );
    }
    out
}

fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Human-readable summary.
pub fn render_text(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "  {k:<28} {v}");
    };
    line("command", r.command.name().into());
    line("source", r.source.clone());
    line("version", r.version.clone());
    if let Some(f) = &r.failure {
        line("FAILED STAGE", format!("{:?}: {}", f.stage, f.message));
    }
    if let Some(spec) = &r.spec {
        line("alphas", vec_str(&spec.alphas));
        for f in &spec.factors {
            if f.states.is_empty() {
                line("factor", f.name.clone());
            } else {
                line("factor", format!("{} ({} states)", f.name, f.states.len()));
            }
        }
    }
    if let Some(g) = r.r_gate {
        line("radius lower bound", format!("{g}"));
    }
    if let Some(x) = &r.xi {
        line("xi", vec_str(&x.xi));
        line("xi'", vec_str(&x.xi_prime));
        line(
            "xi residual",
            format!("{:e}", x.residuals.iter().copied().fold(0.0, f64::max)),
        );
        line("xi' finite-difference gap", format!("{:e}", x.xi_prime_fd_gap));
    }
    if let Some(tc) = &r.type_chain {
        line("nu", vec_str(&tc.nu));
    }
    if let Some(e) = r.ell0 {
        line("ell0 (rate of escape)", format!("{e:.10}"));
    }
    if let Some(c) = &r.c_h {
        line("C_h", format!("{:.10} (gap {:e})", c.formula, c.gap));
    }
    if let Some(e) = &r.entropy {
        let v = &e.values;
        line("h_v1 = ell0 * C_h", format!("{:.10}", v.h_v1));
        line("h_v2 = ell0 * h_Q", format!("{:.10}", v.h_v2));
        line("h_v3 (generating function)", format!("{:.10}", v.h_v3));
        line("h_Q", format!("{:.10}", v.h_q));
        line("entropy spread", format!("{:e}", v.spread));
    }
    if let Some(g) = &r.growth {
        line("lambda0", format!("{:.12}", g.lambda0));
        line("lambda1", format!("{:.12}", g.lambda1));
        line("g0 = log lambda0", format!("{:.10}", g.g0));
        line("g1 = log lambda1", format!("{:.10}", g.g1));
        line("metric spheres", format!("{:?}", g.sphere_counts_metric));
    }
    if let Some(i) = &r.inequalities {
        line(
            "h <= g0 ell0",
            format!("{} (slack {:.6})", i.block_holds, i.block_slack),
        );
        if let (Some(ok), Some(sl)) = (i.metric_holds, i.metric_slack) {
            line("h <= g1 ell1", format!("{ok} (slack {sl:.6})"));
        }
    }
    if let Some(sim) = &r.simulation {
        line(
            "simulation",
            format!("{} walkers, horizon {}, seed {}", sim.walkers, sim.horizon, sim.seed),
        );
        for e in sim.estimates.all() {
            line(
                &format!("  {}", e.estimator),
                format!("{:.6} +/- {:.6}", e.value, e.stderr),
            );
        }
    }
    if let Some(o) = &r.oracle {
        line(
            "oracle TV",
            format!("{:.6} (n={}, {} walkers)", o.total_variation, o.horizon, o.walkers),
        );
        line(
            "oracle Green gap",
            format!("{:e} (N={}, z={})", o.gap, o.certified_terms, o.z),
        );
    }
    if let Some(g) = &r.group {
        line("xi", format!("{:.10}", g.xi));
        line("F-hat", format!("{:.10}", g.fhat));
        line(
            "F(a), F(b), F(c)",
            format!("{:.10}, {:.10}, {:.10}", g.f_a, g.f_b, g.f_c),
        );
        line(
            "h",
            format!(
                "{:.10} (tail <= {:e}, {} shells)",
                g.entropy.h, g.entropy.tail_bound, g.entropy.shells
            ),
        );
        if let Some(fa) = &g.finite_approximation {
            line(&format!("h on Z/{} x Z/2", fa.order), format!("{:.10}", fa.h));
        }
    }
    let _ = writeln!(s, "\n  checks:");
    for c in &r.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        let detail = match (c.observed, c.target) {
            (Some(o), Some(t)) => format!("{o:.8} vs {t} (|diff| {:.2e} <= {:.2e})", c.value, c.tolerance),
            _ if c.tolerance == 0.0 => (if c.passed { "holds" } else { "violated" }).to_string(),
            _ => format!("{:.3e} <= {:.3e}", c.value, c.tolerance),
        };
        let _ = writeln!(s, "  [{verdict}] {:<40} {detail}", c.name);
    }
    let _ = writeln!(s, "\n  overall: {}", if r.passed() { "pass" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run_pipeline, Command, RunConfig, SpecSource};
    use crate::presets::Preset;

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::new(SpecSource::Preset(Preset::TwoFactor), Command::Analyze);
        cfg.walkers = Some(50);
        cfg.horizon = Some(200);
        let r = run_pipeline(&cfg);
        let back = from_json(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_headers_are_fixed() {
        let mut cfg = RunConfig::new(SpecSource::Preset(Preset::TwoFactor), Command::Analyze);
        cfg.walkers = Some(10);
        cfg.horizon = Some(50);
        let files = emit_report(&run_pipeline(&cfg), Format::Csv).unwrap();
        let names: Vec<&str> = files.iter().map(|f| f.file_name.as_str()).collect();
        assert_eq!(names, ["checks.csv", "spheres.csv", "simulation.csv"]);
        assert_eq!(files[0].contents.lines().next(), Some(CHECKS_HEADER));
        assert_eq!(files[1].contents.lines().next(), Some(SPHERES_HEADER));
        assert_eq!(files[2].contents.lines().next(), Some(SIMULATION_HEADER));
        assert_eq!(files[1].contents.lines().nth(1), Some("0,1,1,1"));
    }
}
