use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = fesim_cli::Cli::parse();
    match fesim_cli::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
