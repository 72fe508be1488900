//! Benchmark CLI: run an experiment family, verify the acceptance
//! criteria, or regenerate plots from an existing report directory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ppgm::bench::{self, report, AlgoId, ExperimentManifest, Family, RunStatus};

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Composite-optimization solver benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance, run the requested algorithms, and write
    /// traces, summary, and plots.
    Run {
        /// Problem family: lasso | simplex-qp | structured-l1
        #[arg(long)]
        family: Family,
        /// Comma-separated algorithms or "all"
        /// (p2gm-cm, p2gm-m, fista-bt, fista-bt-rs, pdhg)
        #[arg(long, default_value = "all")]
        algos: String,
        /// RNG seed of the instance
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Iteration budget per algorithm (family default when omitted)
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite and print one line per criterion.
    Verify,
    /// Regenerate the SVG plots of a report directory from its CSVs.
    Plot {
        /// Report directory containing trace CSVs and summary.json
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_algos(spec: &str) -> anyhow::Result<Vec<AlgoId>> {
    if spec.trim() == "all" {
        return Ok(AlgoId::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<AlgoId>().map_err(Into::into))
        .collect()
}

fn cmd_run(
    family: Family,
    algos: &str,
    seed: u64,
    max_iter: Option<usize>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut manifest = ExperimentManifest::defaults(family, seed);
    manifest.algos = parse_algos(algos)?;
    if let Some(iters) = max_iter {
        manifest.budgets.max_iter = iters;
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from(format!("bench-out/{family}-seed{seed}")));

    eprintln!("generating {family} instance (seed {seed}) ...");
    let bundle = bench::run_experiment(&manifest).context("experiment failed")?;
    println!("reference objective: {:.12e}", bundle.reference_value);
    for run in &bundle.runs {
        match &run.status {
            RunStatus::Completed => {
                let final_gap = bundle
                    .gap_series(run)
                    .last()
                    .map_or(f64::NAN, |(_, gap, _)| *gap);
                println!(
                    "{:12} {:5} iterations  final objective {:+.6e}  gap {:.3e}  {:.2}s",
                    run.algo.name(),
                    run.trace.len(),
                    run.final_objective,
                    final_gap,
                    run.wall_seconds
                );
            }
            RunStatus::Skipped { reason } => {
                println!("{:12} skipped: {reason}", run.algo.name());
            }
        }
    }
    let files = report::emit_report(&bundle, &out_dir).context("writing report")?;
    println!("wrote {} files to {}", files.len(), out_dir.display());
    Ok(())
}

fn cmd_verify() -> anyhow::Result<bool> {
    let reports = ppgm::verify::run_all();
    let mut all_passed = true;
    for r in &reports {
        println!("{}", r.line());
        all_passed &= r.passed;
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", reports.len());
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { family, algos, seed, max_iter, out } => {
            cmd_run(family, &algos, seed, max_iter, out).map(|()| true)
        }
        Command::Verify => cmd_verify(),
        Command::Plot { input } => report::replot(&input)
            .map(|files| {
                for f in files {
                    println!("wrote {}", f.display());
                }
                true
            })
            .map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
