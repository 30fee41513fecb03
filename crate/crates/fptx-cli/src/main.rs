//! `fptx`: run the experiments and inspect Jacobians, condition numbers and
//! rounding-error bounds on random instances.

mod diagnostics;
mod selftest;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fptx::harness::{emit_csv, emit_histograms, hist_path, run_experiment, ExperimentKind, ExperimentSpec, SpecOverrides};
use fptx::net::NormVariant;
use fptx::PrecisionSpec;

#[derive(Parser)]
#[command(name = "fptx", version, about = "Transformer forward passes under simulated finite precision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic Jacobians with central finite differences on random instances.
    CheckJacobians {
        #[command(flatten)]
        common: Common,
        /// Relative finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Condition numbers of one layer on random instances, by definition and in closed form.
    Condition {
        /// centring, rms, ln, affine, tlp, scores, softmax, attention or matmul.
        layer: String,
        #[command(flatten)]
        common: Common,
    },
    /// Measured rounding errors against the first-order bounds.
    Bound {
        /// A layer name (as for `condition`), `block` or `deep`.
        target: String,
        #[command(flatten)]
        common: Common,
        /// Number of blocks for `deep`.
        #[arg(long, default_value_t = 3)]
        layers: usize,
    },
    /// Run one of the four experiments and write its CSV files.
    Experiment {
        which: Which,
        #[command(flatten)]
        common: Common,
        /// Experiment configuration in TOML; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Main CSV file; histograms go to `<stem>_hist.csv` next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Print the resolved configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Quick consistency checks of the whole pipeline.
    Selftest,
}

/// Flags shared by the subcommands.
#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of instances (repetitions for experiments).
    #[arg(long)]
    reps: Option<usize>,
    /// Working precision `d:<digits>`, `b:<bits>` or `native`; repeatable.
    #[arg(long = "precision", value_parser = parse_precision)]
    precisions: Vec<PrecisionSpec>,
    /// Normalization layer: rms or ln.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<NormVariant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Which {
    fn kind(self) -> ExperimentKind {
        match self {
            Which::Fig1 => ExperimentKind::DepthSweep,
            Which::Fig2 => ExperimentKind::WkwqScaling,
            Which::Fig3 => ExperimentKind::AttentionInputScaling,
            Which::Fig4 => ExperimentKind::NormalizationPlacement,
        }
    }
}

fn parse_precision(s: &str) -> Result<PrecisionSpec, String> {
    s.parse().map_err(|e: fptx::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<NormVariant, String> {
    s.parse().map_err(|e: fptx::Error| e.to_string())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::CheckJacobians { common, step } => diagnostics::check_jacobians(&common, step),
        Command::Condition { layer, common } => diagnostics::condition(&layer, &common),
        Command::Bound { target, common, layers } => diagnostics::bound(&target, &common, layers),
        Command::Experiment { which, common, config, out, threads, print_config } => {
            experiment(which.kind(), &common, config, out, threads, print_config)
        }
        Command::Selftest => selftest::run(),
    }
}

fn experiment(
    which: ExperimentKind,
    common: &Common,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    print_config: bool,
) -> Result<()> {
    let mut spec = match &config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = ExperimentSpec::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
            if spec.which != which {
                bail!("{} configures `{}`, not `{which}`", path.display(), spec.which);
            }
            spec
        }
        None => ExperimentSpec::defaults(which),
    };
    spec.apply(SpecOverrides {
        seed: common.seed,
        reps: common.reps,
        precisions: (!common.precisions.is_empty()).then(|| common.precisions.clone()),
        variant: common.variant,
        ..SpecOverrides::default()
    });
    spec.validate()?;
    if print_config {
        print!("{}", spec.to_toml()?);
        return Ok(());
    }
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", which.name())));
    let start = Instant::now();
    let table = run_experiment(&spec, threads)?;
    emit_csv(&table, &out).with_context(|| format!("writing {}", out.display()))?;
    let hist = hist_path(&out);
    emit_histograms(&table, &hist).with_context(|| format!("writing {}", hist.display()))?;
    println!(
        "{which}: {} records from {} repetitions in {:.1}s",
        table.records.len(),
        spec.reps,
        start.elapsed().as_secs_f64()
    );
    println!("wrote {} and {}", out.display(), hist.display());
    for r in table.records.iter().filter(|r| r.is_final) {
        let mean = |s: &Option<fptx::harness::ErrorStats>| s.as_ref().map_or(f64::NAN, |s| s.mean);
        println!(
            "  {:<6} {:<5} grid {:<10.4} layer {:<3} mean cw {:.3e} ({} non-finite)  mean nw {:.3e}",
            r.key.precision.to_string(),
            r.key.placement.map_or("-", |p| p.name()),
            r.key.grid_value,
            r.key.layer,
            mean(&r.cw),
            r.cw_inf,
            mean(&r.nw),
        );
    }
    Ok(())
}
