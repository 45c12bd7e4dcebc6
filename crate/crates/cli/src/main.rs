use clap::Parser;
use latentflow::commands::{run, Cli};

fn main() {
    // clap exits with code 2 on usage errors; runtime failures exit 1.
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
