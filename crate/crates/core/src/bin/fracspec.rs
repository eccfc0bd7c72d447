use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// First eigenvalue of the 1D fractional p-Laplacian with potential.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Also write the assembled kernel as JSON.
    #[arg(long)]
    dump_kernel: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FRACSPEC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let code = fracspec::runner::run(&cli.config, cli.dump_kernel);
    ExitCode::from(code as u8)
}
