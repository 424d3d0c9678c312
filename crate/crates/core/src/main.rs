use clap::Parser;

fn main() {
    std::process::exit(revlab::cli::main_with(revlab::cli::Args::parse()));
}
