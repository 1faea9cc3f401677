use std::path::PathBuf;
use std::process::ExitCode;

use atwflow::runner;
use atwflow::scenario;
use atwflow::verify;
use atwflow::AppError;
use atwflow_core::levelset::Variant;
use clap::{Parser, Subcommand, ValueEnum};

/// Minimizing-movements simulator for anisotropic mean curvature flow.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plus,
    Minus,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial set and write frames, diagnostics and a manifest.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve a ladder of superlevel sets and reassemble the level-set functions.
    Levelset {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 64)]
        levels: usize,
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a stored trace; exits 4 when a hard check fails.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated subset of checks; all when omitted.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
    },
    /// Run the scenario along a ladder of time steps and tabulate the refinement gaps.
    Convergence {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ladder: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run { scenario, out } => {
            let loaded = scenario::load(&scenario)?;
            let trace = runner::run(&loaded, &out)?;
            println!("{} steps written to {}", trace.records.len(), out.display());
        }
        Command::Levelset {
            scenario,
            levels,
            variant,
            out,
        } => {
            let loaded = scenario::load(&scenario)?;
            let variants: &[Variant] = match variant {
                VariantArg::Plus => &[Variant::Plus],
                VariantArg::Minus => &[Variant::Minus],
                VariantArg::Both => &[Variant::Plus, Variant::Minus],
            };
            let outcome = runner::run_levelset(&loaded, levels, variants, Some(&out))?;
            println!(
                "nesting corrections {}, ordering violations {}",
                outcome.total_corrections(),
                outcome.total_ordering_violations()
            );
        }
        Command::Verify { trace, checks } => {
            let rep = verify::verify(&trace, &checks)?;
            print!("{}", rep.markdown());
            let failed = rep.hard_failures();
            if !failed.is_empty() {
                let names: Vec<String> = failed.iter().map(|r| format!("{} ({})", r.check, r.quantity)).collect();
                return Err(AppError::Verification(names.join(", ")));
            }
        }
        Command::Convergence { scenario, ladder, out } => {
            let loaded = scenario::load(&scenario)?;
            let traces = runner::convergence(&loaded, &ladder, Some(&out))?;
            let rep = atwflow_core::flow::refinement_study(&traces);
            println!("refinement gaps strictly decreasing: {}", rep.strictly_decreasing());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
