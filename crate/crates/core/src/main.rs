use clap::Parser;
use isolab::cli::{execute, RunConfig};

fn main() {
    std::process::exit(execute(&RunConfig::parse()));
}
