use clap::Parser;
use rogue_service::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cli::execute(cli) {
        eprintln!("rogue: {e}");
        std::process::exit(1);
    }
}
