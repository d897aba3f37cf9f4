use clap::Parser;

use anomalylab::cli::{main_with, Cli, THREADS_ENV};

fn main() {
    let cli = Cli::parse();
    std::process::exit(main_with(cli, std::env::var(THREADS_ENV).ok()));
}
