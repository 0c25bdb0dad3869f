mod cli;
mod config;
mod manifest;
mod runner;

use clap::Parser;

fn main() {
    // clap reports usage problems itself and exits with code 2
    let parsed = cli::Cli::parse();
    match runner::run(parsed) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.is::<config::UsageError>() { 2 } else { 1 };
            std::process::exit(code);
        }
    }
}
