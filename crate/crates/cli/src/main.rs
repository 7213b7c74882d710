//! `rfs-track` binary.

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = rfs_track::Cli::parse();
    if let Err(e) = rfs_track::run(cli) {
        eprintln!("rfs-track: {e}");
        std::process::exit(e.exit_code());
    }
}
