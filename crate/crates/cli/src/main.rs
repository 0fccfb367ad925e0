use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match diskpop_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(diskpop_cli::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match diskpop_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
