//! `starsim` binary: parse the command line, dispatch, map errors onto the
//! stable exit-code contract (0 success, 2 usage, 3 capacity, 4 audit
//! failure, 1 internal).

use clap::Parser;
use starsim_cli::{dispatch, Cli};

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
