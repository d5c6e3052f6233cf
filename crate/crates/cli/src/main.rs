use std::process::ExitCode;

use clap::Parser;
use doalab::cli::Cli;
use doalab::{run, thread_cap, HarnessError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match start(&cli) {
        Ok(manifest) => {
            log::info!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("doalab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn start(cli: &Cli) -> Result<std::path::PathBuf, HarnessError> {
    let threads = thread_cap(std::env::var("DOALAB_THREADS").ok().as_deref())?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    run(&cli.command)
}
