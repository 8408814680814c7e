use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use cubesig_cli::{run, Cli, CliError, Output, EXIT_INVALID};

fn emit(out: &Output) -> Result<(), CliError> {
    match &out.path {
        Some(p) => fs::write(p, &out.text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(out.text.as_bytes())
            .map_err(|e| CliError::Invalid(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = run(&cli).and_then(|out| emit(&out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::VerifyFailed { report, .. } = &e {
                if let Err(write_err) = emit(report) {
                    eprintln!("error: {write_err}");
                }
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
