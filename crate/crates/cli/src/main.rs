use clap::Parser;
use simplex_sde_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
