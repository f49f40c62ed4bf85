use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use blowave::config::{self, Command, ConfigError};
use blowave::error::Error;
use blowave::run::{exit_code_for_error, run};

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Cmd {
    Asymptotic,
    Forward,
    Backward,
    SignCheck,
    Diagnose,
    Sweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Asymptotic => Command::Asymptotic,
            Cmd::Forward => Command::Forward,
            Cmd::Backward => Command::Backward,
            Cmd::SignCheck => Command::SignCheck,
            Cmd::Diagnose => Command::Diagnose,
            Cmd::Sweep => Command::Sweep,
        }
    }
}

/// Numerical experiments for −□u = (∂ₜu)² in 3+1 dimensions.
///
/// Exit status: 0 completed, 2 blow-up detected, 3 diverged, 4 invalid
/// configuration, 5 i/o error, 1 any other failure.
#[derive(Debug, Parser)]
#[command(name = "blowave", version)]
struct Cli {
    command: Cmd,
    /// Configuration file with [data] [grid] [solver] [output] sections.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `dir` in [output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, overriding `threads` in [output].
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e) as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| Error::io(&cli.config, e))?;
    let mut cfg = config::load(&text)?;
    let requested = Command::from(cli.command);
    if cfg.command != requested {
        return Err(Error::Config(vec![ConfigError {
            line: None,
            message: format!("command line asks for `{requested}` but the file declares `{}`", cfg.command),
        }]));
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(n) = cli.threads {
        cfg.output.threads = n;
    }
    let report = run(&cfg)?;
    println!("{}", report.summary);
    Ok(report.exit_code())
}
