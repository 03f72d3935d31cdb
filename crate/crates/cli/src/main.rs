use std::process::ExitCode;

use clap::Parser;
use nlhj_cli::{run, Cli, EXIT_VALIDATION};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
