use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dso_core::analysis::SweepKind;
use dso_core::run::{self, LoadedCase, Outcome};

/// Stochastic DSO dispatch with peer-to-peer contracts.
///
/// A case is a JSON file or one of `bundled:two-bus`, `bundled:feeder95`.
/// Log level comes from `DSO_LOG` (default `info`).
#[derive(Parser)]
#[command(name = "dso", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a case with its own contract book.
    Run {
        case: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Sweep the trading ratio of one contract family.
    Sweep {
        case: String,
        #[arg(long)]
        kind: SweepKind,
        /// Inclusive range `a:b:step`.
        #[arg(long)]
        ratios: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check that fixed contracts leave the dispatch invariant.
    Verify {
        case: String,
        /// JSON array of contracts.
        #[arg(long)]
        contracts: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Draw a scenario table from the case forecast.
    GenScenarios {
        case: String,
        #[arg(short)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn execute(cmd: Cmd) -> anyhow::Result<Outcome> {
    let load = |c: &str| -> anyhow::Result<LoadedCase> { Ok(run::load_case(c)?) };
    Ok(match cmd {
        Cmd::Run { case, out } => {
            let (summary, outcome) = run::run(&load(&case)?, &out)?;
            match summary.objective {
                Some(o) => println!("{:?} surplus {}", summary.status, o.total),
                None => println!("{:?} ({})", summary.status, summary.backend_status),
            }
            outcome
        }
        Cmd::Sweep {
            case,
            kind,
            ratios,
            out,
        } => {
            let ratios = run::parse_ratios(&ratios)?;
            let (table, outcome) = run::sweep_cmd(&load(&case)?, kind, &ratios, &out)?;
            let solved = table.points.iter().filter(|p| p.indices.is_some()).count();
            println!("{} of {} points solved", solved, table.points.len());
            outcome
        }
        Cmd::Verify {
            case,
            contracts,
            out,
        } => {
            let lc = load(&case)?;
            let book = run::load_contracts(&contracts)?;
            let (report, outcome) = run::verify_cmd(&lc, &book, &out)?;
            println!("{:?}: {:?}", report.plan_kind, report.verdict);
            outcome
        }
        Cmd::GenScenarios { case, n, seed, out } => {
            let sc = run::gen_scenarios(&load(&case)?, n, seed, &out)?;
            println!("{} scenarios, {} clamped draws", sc.n_s, sc.clamped);
            Outcome::Ok
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DSO_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
