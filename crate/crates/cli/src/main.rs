use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimo_placement::verify::{Hooks, VerifyOptions};
use mimo_placement::Budgets;
use mimo_placement_cli::{parse_budget, parse_budget_list, CliError, Job, JobConfig};

/// Sparse transmitter, pulse and receiver selection for colocated MIMO radar.
#[derive(Parser)]
#[command(name = "mimo-placement", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Job file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the job file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the job file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver; writes selection.json and crlb.csv.
    Design {
        #[command(flatten)]
        common: Common,
        /// `K_P[:K_R]`, overriding the job's budgets.
        #[arg(long)]
        budgets: Option<String>,
    },
    /// One design per budget pair; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated `K_P[:K_R]` list in ascending order.
        #[arg(long)]
        budgets: String,
    },
    /// Ambiguity traces (and optionally estimator error) of a selection.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// selection.json to evaluate.
        #[arg(long)]
        selection: PathBuf,
    },
    /// Self-check suite; exits nonzero on any failure.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reduced draw counts and ground sets.
        #[arg(long)]
        quick: bool,
        /// Largest ground set enumerated by the submodularity checks.
        #[arg(long)]
        max_ground: Option<usize>,
    },
}

fn load(common: &Common) -> Result<(Job, PathBuf), CliError> {
    let mut cfg = JobConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg.resolve()?, out))
}

fn budgets_for(job: &Job, kp: usize, kr: Option<usize>) -> Budgets {
    Budgets::new(kp, kr.unwrap_or(job.budgets().receivers))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Design { common, budgets } => {
            let (mut job, out) = load(&common)?;
            if let Some(text) = budgets {
                let (kp, kr) = parse_budget(&text, None)?;
                job = job.with_budgets(budgets_for(&job, kp, kr))?;
            }
            let file = mimo_placement_cli::design(&job, &out)?;
            println!(
                "{}: K_P = {}, K_R = {}, objective = {}",
                file.solver.name(),
                file.k_p,
                file.k_r,
                file.objective.map_or("unbounded".to_string(), |o| format!("{o:e}"))
            );
            println!("wrote {}", Path::new(&out).join("selection.json").display());
            Ok(true)
        }
        Command::Sweep { common, budgets } => {
            let (job, out) = load(&common)?;
            let list: Vec<Budgets> = parse_budget_list(&budgets)?
                .into_iter()
                .map(|(kp, kr)| budgets_for(&job, kp, kr))
                .collect();
            let rows = mimo_placement_cli::sweep(&job, &list, &out)?;
            for r in &rows {
                println!(
                    "K_P = {:4}, K_R = {:3}: objective {:.6e}, max tr(CRLB) {:.6e}, {:.3} s",
                    r.budgets.pulses, r.budgets.receivers, r.objective, r.crlb_trace_max, r.seconds
                );
            }
            Ok(true)
        }
        Command::Evaluate { common, selection } => {
            let (job, out) = load(&common)?;
            let mle = mimo_placement_cli::evaluate(&job, &selection, &out)?;
            if let Some(m) = mle {
                println!("MLE MSE {:?} (95% half-widths {:?})", m.report.mse, m.report.ci_half_width);
            }
            println!("wrote traces to {}", out.display());
            Ok(true)
        }
        Command::Verify { seed, out, quick, max_ground } => {
            let mut opts = VerifyOptions { seed, ..VerifyOptions::default() };
            if quick {
                opts.fim_draws = 100;
                opts.derivative_draws = 50;
                opts.submodular_configs = 4;
                opts.max_ground = 6;
            }
            if let Some(g) = max_ground {
                opts.max_ground = g;
            }
            let report = mimo_placement_cli::verify(&opts, &Hooks::default(), out.as_deref())?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
