use clap::Parser;

fn main() {
    let cli = netguard_cli::Cli::parse();
    std::process::exit(netguard_cli::run(cli));
}
