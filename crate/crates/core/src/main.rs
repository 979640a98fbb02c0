use clap::Parser;

fn main() {
    std::process::exit(iobound::cli::main_with(iobound::cli::Cli::parse()));
}
