use clap::Parser;

fn main() {
    let cli = wavestat_cli::Cli::parse();
    std::process::exit(wavestat_cli::run(&cli));
}
