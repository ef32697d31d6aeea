use clap::Parser;

fn main() {
    let cli = cpdilate::cli::Cli::parse();
    std::process::exit(cpdilate::cli::run(cli));
}
