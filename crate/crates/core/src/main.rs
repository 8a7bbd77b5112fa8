use clap::Parser;

fn main() {
    let cli = coreflow::cli::Cli::parse();
    std::process::exit(coreflow::cli::run(&cli));
}
