use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fpentropy::pipeline::DEFAULT_GROWTH_DEPTH;
use fpentropy::report::{emit_report, failure_json, write_outputs};
use fpentropy::{run_pipeline, Command, Format, Preset, RunConfig, SpecSource};

/// Entropy, rate of escape and growth of random walks on free products.
#[derive(Debug, Parser)]
#[command(name = "fpentropy", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Parse and validate a spec and run the transience gate.
    Validate(Opts),
    /// Full analysis; also simulates when --walkers or --horizon is given.
    Analyze(Opts),
    /// Monte Carlo estimates, compared with the analytic values when available.
    Simulate(Opts),
    /// Growth rates of the block length and the graph metric.
    Growth(Opts),
    /// Exact enumeration and Green partial sums against the analytic values.
    Oracle(Opts),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct Opts {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in spec: two-factor or zz2.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    walkers: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Relative agreement tolerance between independent routes.
    #[arg(long)]
    tol: Option<f64>,
    /// Depth of the sphere counts.
    #[arg(long, default_value_t = DEFAULT_GROWTH_DEPTH)]
    depth: usize,
    /// Run the simulation on one thread.
    #[arg(long)]
    serial: bool,
}

fn build_config(command: Command, o: &Opts) -> anyhow::Result<RunConfig> {
    let source = match (&o.preset, &o.config) {
        (Some(name), _) => match Preset::from_name(name) {
            Some(p) => SpecSource::Preset(p),
            None => bail!("unknown preset `{name}`"),
        },
        (None, Some(path)) => SpecSource::File(path.clone()),
        (None, None) => bail!("either --config or --preset is required"),
    };
    let mut cfg = RunConfig::new(source, command);
    cfg.walkers = o.walkers;
    cfg.horizon = o.horizon;
    cfg.seed = o.seed;
    cfg.parallel = !o.serial;
    cfg.growth_depth = o.depth;
    if let Some(t) = o.tol {
        cfg.tolerances.agreement = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (command, opts) = match &cli.command {
        Cmd::Validate(o) => (Command::Validate, o),
        Cmd::Analyze(o) => (Command::Analyze, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Growth(o) => (Command::Growth, o),
        Cmd::Oracle(o) => (Command::Oracle, o),
    };
    let cfg = build_config(command, opts)?;
    let report = run_pipeline(&cfg);
    let format = match opts.format {
        FormatArg::Text => Format::Text,
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let files = emit_report(&report, format)?;
    match &opts.out {
        Some(dir) => {
            write_outputs(&files, dir).with_context(|| format!("writing to {}", dir.display()))?;
            for f in &files {
                println!("wrote {}", dir.join(&f.file_name).display());
            }
        }
        None => {
            for f in &files {
                if files.len() > 1 {
                    println!("# {}", f.file_name);
                }
                print!("{}", f.contents);
            }
        }
    }
    if !report.passed() {
        eprintln!("{}", failure_json(&report));
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
