use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splitmono::cli::{demo_config, load_config, parse_config, run_experiment, validate_config, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "splitmono", version, about = "Run monotone-splitting experiments from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config and pre-check every parameter condition.
    Validate {
        config: PathBuf,
        #[arg(long)]
        unsafe_stepsize: bool,
    },
    /// Run every (solver, parameters, seed) cell and write report.csv and summary.md.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Run step sizes outside the proven range (warns instead of failing).
        #[arg(long)]
        unsafe_stepsize: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run a built-in desk-scale experiment: lin-ineq, entropy, erm or distributed.
    Demo {
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn execute(cfg: &ExperimentConfig, opts: RunOptions) -> ExitCode {
    match run_experiment(cfg, &opts) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for row in outcome.rows.iter().filter(|r| r.status == "error") {
                eprintln!(
                    "cell error: {} {} seed {}: {}",
                    row.solver,
                    row.params_json,
                    row.seed,
                    row.message.as_deref().unwrap_or("unknown")
                );
            }
            println!("wrote {} and {}", outcome.csv_path.display(), outcome.summary_path.display());
            if outcome.errors > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, unsafe_stepsize } => {
            match load_config(&config).and_then(|cfg| validate_config(&cfg, unsafe_stepsize).map(|w| (cfg, w))) {
                Ok((cfg, warnings)) => {
                    for w in &warnings {
                        eprintln!("warning: {w}");
                    }
                    println!("{}: valid ({} cells x {} seeds)", config.display(), cfg.cells.len(), cfg.seeds.len());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Run { config, out, seeds, unsafe_stepsize, threads } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let out_dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("splitmono-out"));
            execute(&cfg, RunOptions { out_dir, threads, seeds, unsafe_stepsize })
        }
        Command::Demo { kind, out, threads } => {
            let cfg = match demo_config(&kind).and_then(parse_config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let out_dir = out.unwrap_or_else(|| PathBuf::from(format!("splitmono-demo-{kind}")));
            let code = execute(&cfg, RunOptions { out_dir: out_dir.clone(), threads, seeds: None, unsafe_stepsize: false });
            if let Ok(summary) = std::fs::read_to_string(out_dir.join("summary.md")) {
                println!("\n{summary}");
            }
            code
        }
    }
}
