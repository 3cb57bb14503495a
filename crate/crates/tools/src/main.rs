use clap::Parser;
use mmcot_tools::cli::{run, Cli};

fn main() {
    // Usage errors exit with status 2 via clap.
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
