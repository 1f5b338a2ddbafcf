//! Command-line front end for the `dualgap` library.
//!
//! [`run`] parses arguments, runs one subcommand and returns the process
//! exit code: 0 on success, 2 for usage errors (including unknown games,
//! algorithms and invalid parameters), 1 for everything else.

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::{splice_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Find `--config` before clap runs, so a config file may also supply the
/// subcommand.
fn config_path(argv: &[OsString]) -> Result<Option<OsString>, CliError> {
    let mut found = None;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = it.next().ok_or_else(|| CliError::Usage("--config needs a path".into()))?;
            found = Some(v.clone());
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(v.into());
        }
    }
    Ok(found)
}

fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv)? else { return Ok(argv) };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let cfg: RunConfig = text.parse().map_err(|e: config::ConfigError| CliError::Usage(e.to_string()))?;
    Ok(splice_config(&argv, &cfg))
}

fn dispatch(cli: &Cli) -> Result<commands::Written, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Traj(a) => commands::traj(g, a),
        Command::Stability(a) => commands::stability(g, a),
        Command::Landscape(a) => commands::landscape_cmd(g, a),
        Command::Rate(a) => commands::rate(g, a),
        Command::Mog(a) => commands::mog(g, a),
        Command::Plot(a) => commands::plot(g, a),
    }
}

fn run_parsed(cli: Cli) -> Result<commands::Written, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| dispatch(&cli))
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let name = cli.command.name();
    match run_parsed(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error ({name}): {e}");
            e.exit_code()
        }
    }
}
