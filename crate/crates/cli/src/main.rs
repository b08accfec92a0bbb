use clap::Parser;

fn main() {
    let cli = biaslab_cli::Cli::parse();
    std::process::exit(biaslab_cli::run(&cli));
}
