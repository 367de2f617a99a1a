// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! `shb`: run registered spectral-hole-burning scenarios.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shb_core::runner::{find_scenario, load_config, run_scenario, scenario_list};
use shb_core::Error;

#[derive(Parser)]
#[command(
    name = "shb",
    version,
    about = "Spectral hole burning in a cavity-emitter ensemble"
)]
struct Cli {
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a previous run's manifest.json.
    Run { config: PathBuf },
    /// List the registered scenarios.
    List,
    /// Print the default config of a scenario as JSON.
    Describe { scenario: String },
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let doc = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{doc}");
    ExitCode::FAILURE
}

/// Print a line to stdout; a closed pipe (`shb list | head`) is not an error.
fn out(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn report(e: &Error) -> ExitCode {
    fail(e.kind(), &e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim()),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail("usage", "--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail("usage", &e.to_string());
        }
    }

    match cli.command {
        Command::List => {
            for s in scenario_list() {
                out(s.line());
            }
            ExitCode::SUCCESS
        }
        Command::Describe { scenario } => {
            let info = match find_scenario(&scenario) {
                Ok(i) => i,
                Err(e) => return report(&e),
            };
            let mut cfg = info.default_config();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = cli.out {
                cfg.output_dir = out;
            }
            match cfg.to_json() {
                Ok(s) => {
                    out(s);
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
        Command::Run { config } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return report(&e),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = cli.out {
                cfg.output_dir = out;
            }
            match run_scenario(&cfg) {
                Ok(run) => {
                    for f in &run.files {
                        out(f.display());
                    }
                    out(run.manifest.display());
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
    }
}
