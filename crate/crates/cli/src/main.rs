use std::io::{Read, Write};
use std::process::ExitCode;

use clap::Parser;
use steplen_cli::{emit_report, parse_spec, report_exit_code, run_command, Cli, CliError};

fn read_input(cli: &Cli) -> Result<String, CliError> {
    match &cli.input {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(s)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = read_input(&cli)
        .and_then(|text| parse_spec(&text, &cli.overrides()))
        .and_then(|spec| run_command(&spec, cli.command));
    match result {
        Ok(report) => {
            let out = emit_report(&report, cli.format);
            if std::io::stdout().write_all(out.as_bytes()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::from(report_exit_code(&report))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
