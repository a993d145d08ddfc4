use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use csrk_cli::{run, Cli, EXIT_CHECK_FAILED, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.into_config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let written = match &cfg.output {
        Some(path) => std::fs::write(path, &outcome.rendered.text),
        None => std::io::stdout().lock().write_all(outcome.rendered.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return ExitCode::FAILURE;
    }
    if !outcome.success {
        eprintln!("error: some conditions failed");
        return ExitCode::from(EXIT_CHECK_FAILED as u8);
    }
    ExitCode::SUCCESS
}
