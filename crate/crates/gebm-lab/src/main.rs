use clap::Parser;
use gebm_lab::cli::{run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    // Route clap's own failures through the documented exit-code contract:
    // help/version print and exit 0, usage errors exit 1 (clap's default of
    // 2 would collide with the divergence code).
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
