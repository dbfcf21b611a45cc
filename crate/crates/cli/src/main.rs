use clap::Parser;
use linkreg_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => eprintln!("results written to {}", dir.display()),
        Err(e) => {
            eprintln!("linkreg: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
