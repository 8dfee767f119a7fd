use std::io::Write;
use std::process::ExitCode;

use boab_cli::error::CliError;
use boab_cli::{run, summary_lines, Cli};
use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("bad arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::config(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Some(summary)) => {
            let mut stdout = std::io::stdout().lock();
            for line in summary_lines(&summary) {
                // a closed pipe (`| head`) is not a failure of the run
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
