use clap::Parser;

fn main() {
    let cli = bcrisk::cli::Cli::parse();
    if let Err(e) = bcrisk::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
