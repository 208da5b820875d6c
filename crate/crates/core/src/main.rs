use clap::Parser;

fn main() {
    std::process::exit(ipslab::cli::run(ipslab::cli::Cli::parse()));
}
