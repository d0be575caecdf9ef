//! Command-line front end: flag parsing, declarative configs and rendering.

pub mod args;
pub mod config;
pub mod error;
pub mod run;

use std::io::Write;

use args::Cli;
use config::{read_config, write_config, RunConfig};
use error::{usage, CliError, Result};

/// Runs a parsed command line; the caller maps errors to exit codes.
pub fn main_with(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second initialization only happens in tests; the pool is then
        // already set up and the hint is ignored.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let config: RunConfig = match (cli.config, cli.command) {
        (Some(_), Some(_)) => return Err(usage("give either --config or a subcommand, not both")),
        (Some(path), None) => read_config(&std::fs::read_to_string(&path)?)?,
        (None, Some(cmd)) => cmd.into_config()?,
        (None, None) => return Err(usage("a subcommand or --config is required")),
    };
    if cli.print_config {
        return emit(&cli.output, &(write_config(&config)? + "\n"));
    }
    let format = cli.format.unwrap_or_else(|| run::default_format(&config));
    let rendered = run::execute(&config, format)?;
    if let (Some(path), Some(fit)) = (&cli.fit_output, &rendered.fit) {
        std::fs::write(path, serde_json::to_string_pretty(fit)? + "\n")?;
    }
    emit(&cli.output, &rendered.body)
}

fn emit(output: &str, body: &str) -> Result<()> {
    if output == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(body.as_bytes())?;
        out.flush()?;
    } else {
        std::fs::write(output, body).map_err(CliError::Io)?;
    }
    Ok(())
}
