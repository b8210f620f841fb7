use clap::Parser;
use lasq_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli, &mut std::io::stdout().lock()) {
        eprintln!("lasq: {e}");
        std::process::exit(e.exit_code());
    }
}
