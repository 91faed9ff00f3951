mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

fn run(cli: &Cli) -> Result<Outcome> {
    let (outcome, out) = match &cli.command {
        Command::Layout(a) => (commands::layout(a)?, &a.output),
        Command::Check(a) => (commands::check(a)?, &a.output),
        Command::Freqs(a) => (commands::freqs(a)?, &a.output),
        Command::Decay(a) => (commands::decay(a)?, &a.output),
        Command::Score(a) => (commands::score(a)?, &a.output),
        Command::Mass(a) => (commands::mass(a)?, &a.output),
        Command::Recommend(a) => (commands::recommend(a)?, &a.output),
    };
    // Output is fully rendered before anything is written, so failures
    // never leave a partial file behind.
    match &out.out {
        Some(path) => std::fs::write(path, &outcome.text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout()
            .lock()
            .write_all(outcome.text.as_bytes())?,
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => ExitCode::from(o.code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
