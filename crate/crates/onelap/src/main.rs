use clap::Parser;
use onelap::config::{Mode, RunConfig};
use onelap::runner;
use std::path::PathBuf;
use std::process::ExitCode;

/// Config-driven runner for oracle checks, single solves, continuations,
/// parameter sweeps and dual-norm certificates.
#[derive(Parser)]
#[command(name = "onelap", version)]
struct Args {
    /// Path to a key=value config file.
    #[arg(long)]
    config: PathBuf,

    /// Override the mode from the config file.
    #[arg(long)]
    mode: Option<String>,

    /// Parallel instances in sweep mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Print the canonical serialization of the parsed config and exit.
    #[arg(long)]
    dump_config: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return ExitCode::from(runner::report_failure(&e) as u8),
    };
    if let Some(mode) = &args.mode {
        cfg.mode = match Mode::parse(mode) {
            Ok(m) => m,
            Err(e) => return ExitCode::from(runner::report_failure(&e) as u8),
        };
    }
    if args.dump_config {
        print!("{}", cfg.dump());
        return ExitCode::SUCCESS;
    }
    match runner::run(&cfg, args.jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(runner::report_failure(&e) as u8),
    }
}
