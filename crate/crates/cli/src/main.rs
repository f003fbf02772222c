use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use foliastab::scenario::{catalog, resolve, run_config, write_reports, RunError, RunOptions, ScenarioReport};

/// Stability of leaves of codimension-one foliations under higher-order curvature functionals.
#[derive(Parser)]
#[command(name = "foliastab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a shipped scenario by name.
    Run {
        /// Path to a `.cfg` file or the name of a shipped scenario.
        scenario: String,
        /// Multiply every grid size by this power of two.
        #[arg(long, default_value_t = 1)]
        grid_scale: usize,
        /// Directory for the summary and checks CSV files.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory for the per-leaf JSON reports.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Seed of the random algebraic checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-node curvature data.
        #[arg(long)]
        dump_nodes: bool,
    },
    /// List shipped scenarios and those found in a directory.
    List {
        #[arg(long)]
        scenario_dir: Option<PathBuf>,
    },
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn print_report(rep: &ScenarioReport) {
    println!("scenario {}: {}", rep.scenario, rep.description);
    println!("ambient: {} ({})", rep.ambient, rep.ambient_class);
    println!("orientation: {}", rep.orientation_convention);
    println!("grid: {:?}", rep.grid);
    for leaf in &rep.leaves {
        println!("leaf s = {}: {} ({} nodes, volume {:.6})", leaf.parameter, leaf.leaf, leaf.nodes, leaf.volume);
        for st in &leaf.stability {
            println!("  r = {}: {}", st.r, st.summary);
        }
    }
    let total = rep.all_checks().filter(|c| c.passed.is_some()).count();
    let failed = rep.failures();
    println!("checks: {} of {total} passed ({:.2}s)", total - failed.len(), rep.elapsed_seconds);
    for f in &failed {
        println!("FAILED {f}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List { scenario_dir } => match catalog(scenario_dir.as_deref()) {
            Ok(entries) => {
                for e in entries {
                    let src = e.path.map(|p| p.display().to_string()).unwrap_or_else(|| "shipped".into());
                    println!("{:<22} {:<10} {}", e.name, src, e.description);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { scenario, grid_scale, csv, json, seed, dump_nodes } => {
            let config = match resolve(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let rep = match run_config(&config, RunOptions { grid_scale, seed }) {
                Ok(r) => r,
                Err(e @ RunError::Config(_)) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_VIOLATION);
                }
            };
            print_report(&rep);
            let json = json.or(config.output.json.clone());
            let csv = csv.or(config.output.csv.clone());
            let dump = dump_nodes || config.output.dump_nodes;
            match write_reports(&rep, json.as_deref(), csv.as_deref(), dump) {
                Ok(w) => {
                    for p in w.json.iter().chain(&w.csv) {
                        println!("wrote {}", p.display());
                    }
                }
                Err(e) => {
                    eprintln!("error writing reports: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
            if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
    }
}
