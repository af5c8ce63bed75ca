use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use junction::acceptance::{load_suite, run_suite};
use junction::report::report;
use junction::runner::{run, RunConfig};
use junction::Error;

/// Closed-loop merging simulations at occluded yield junctions.
///
/// The thread count for parallel repetitions is read from JUNCTION_THREADS.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write logs and metrics.
    Run {
        scenario: PathBuf,
        /// Repetitions with consecutive seeds.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// First seed; defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Planning frequency override, Hz.
        #[arg(long)]
        hz: Option<f64>,
        /// Simulated duration override, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Aggregate the runs found in a directory.
    Report { dir: PathBuf },
    /// Run the acceptance suite and print one line per check.
    Acceptance { suite: PathBuf },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.report()).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            reps,
            seed,
            out,
            hz,
            duration,
        } => {
            let cfg = RunConfig {
                scenario,
                reps,
                seed,
                out,
                hz,
                duration,
            };
            match run(&cfg) {
                Ok(runs) => {
                    for r in &runs {
                        let m = &r.summary.metrics;
                        println!(
                            "{} seed {}: {} t_f {} min d_Lane {:.3} m max jerk {:.3}/{:.3} m/s^3",
                            m.name,
                            m.seed,
                            m.category.map_or("uncategorized", |c| c.as_str()),
                            m.t_f.map_or(String::from("-"), |t| format!("{t:.2} s")),
                            m.min_d_lane,
                            m.max_jerk_smoothed,
                            m.max_jerk_planned
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Report { dir } => match report(&dir) {
            Ok(rep) => {
                print!("{}", rep.to_text());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Acceptance { suite } => {
            let result = load_suite(&suite).and_then(|(s, base)| run_suite(&s, &base));
            match result {
                Ok(checks) => {
                    for c in &checks {
                        println!("{c}");
                    }
                    let failed = checks.iter().filter(|c| !c.pass).count();
                    println!("{} of {} checks passed", checks.len() - failed, checks.len());
                    if failed == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
