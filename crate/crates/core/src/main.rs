//! Command-line experiment runner for the multi-patch dG solver.

use clap::{Args, Parser, Subcommand};
use ieti_dg::driver::{
    emit_report, run_experiment, scaling_study, DriverError, ExperimentConfig, Layout, ReportFormat,
};
use ieti_dg::ieti::Variant;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ieti-dg",
    about = "Multi-patch isogeometric Poisson solver with dG coupling and dual-primal tearing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit a report.
    Run(RunArgs),
    /// Sweep refinement levels and fit the condition estimates against
    /// the poly-logarithmic model.
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Spline degree.
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Patch layout: square:NxM or annulus:NxM[:RI:RO].
    #[arg(long, default_value = "square:2x2")]
    layout: String,
    /// Solver variant: mfd | mfd2 | mlu | cglu.
    #[arg(long, default_value = "mfd")]
    variant: String,
    /// Outer solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Primal-basis tolerance; "auto" means eps/100.
    #[arg(long, default_value = "auto")]
    eps_c: String,
    /// SIPG penalty override (default 2 (p+1)^2).
    #[arg(long)]
    delta: Option<f64>,
    /// Raise the degree of the red patches to p+1.
    #[arg(long)]
    mixed_degree: bool,
    /// Refine the grey patches once more.
    #[arg(long)]
    mixed_refine: bool,
    /// Extra Gauss points per direction.
    #[arg(long, default_value_t = 0)]
    quad_increment: usize,
    /// Worker threads for patch-parallel phases.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Report format: csv | json | md.
    #[arg(long, default_value = "csv")]
    format: String,
    /// JSON config file with the same keys; overrides the other flags.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Refinement level.
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ScalingArgs {
    /// Refinement range LO..HI (inclusive).
    #[arg(long, default_value = "1..4")]
    r: String,
    #[command(flatten)]
    common: CommonArgs,
}

fn build_config(common: &CommonArgs, r: usize) -> Result<ExperimentConfig, DriverError> {
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DriverError::Usage(format!("cannot read config {path:?}: {e}")))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| DriverError::Usage(format!("bad config {path:?}: {e}")))?;
        return Ok(cfg);
    }
    let layout = Layout::parse(&common.layout)?;
    let variant: Variant = common.variant.parse().map_err(DriverError::Usage)?;
    let eps_c = match common.eps_c.as_str() {
        "auto" => None,
        v => Some(
            v.parse::<f64>()
                .map_err(|_| DriverError::Usage(format!("bad eps-c '{v}'")))?,
        ),
    };
    let mut cfg = ExperimentConfig::new(common.p, r, layout, variant);
    cfg.eps = common.eps;
    cfg.eps_c = eps_c;
    cfg.delta = common.delta;
    cfg.mixed_degree = common.mixed_degree;
    cfg.mixed_refine = common.mixed_refine;
    cfg.quad_increment = common.quad_increment;
    cfg.jobs = common.jobs;
    Ok(cfg)
}

fn write_out(common: &CommonArgs, text: &str) -> Result<(), DriverError> {
    match &common.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| DriverError::Usage(format!("cannot write {path:?}: {e}"))),
        None => {
            if text.ends_with('\n') {
                print!("{text}");
            } else {
                println!("{text}");
            }
            Ok(())
        }
    }
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, DriverError> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| DriverError::Usage(format!("bad range '{s}', expected LO..HI")))?;
    let lo: usize = lo
        .parse()
        .map_err(|_| DriverError::Usage(format!("bad range bound '{lo}'")))?;
    let hi: usize = hi
        .trim_start_matches('=')
        .parse()
        .map_err(|_| DriverError::Usage(format!("bad range bound '{hi}'")))?;
    if lo > hi {
        return Err(DriverError::Usage(format!("empty range '{s}'")));
    }
    Ok(lo..=hi)
}

fn run(cli: Cli) -> Result<(), DriverError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(&args.common, args.r)?;
            let format: ReportFormat = args.common.format.parse().map_err(DriverError::Usage)?;
            let record = run_experiment(&cfg)?;
            let text = emit_report(std::slice::from_ref(&record), format);
            write_out(&args.common, &text)?;
            Ok(())
        }
        Command::Scaling(args) => {
            let range = parse_range(&args.r)?;
            let cfg = build_config(&args.common, *range.start())?;
            let record = scaling_study(&cfg, range)?;
            let text = serde_json::to_string_pretty(&record)
                .map_err(|e| DriverError::Usage(e.to_string()))?;
            write_out(&args.common, &text)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DriverError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("solver failure: {err}");
            ExitCode::from(2)
        }
    }
}
