use clap::Parser;
use nnd_cli::args::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 0 for --help/--version and 2 for usage errors.
            std::process::exit(e.exit_code());
        }
    };
    let args = std::env::args().skip(1).collect();
    if let Err(e) = nnd_cli::commands::run(&cli, args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
