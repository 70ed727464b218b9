use clap::Parser;

fn main() {
    let cli = ssp_cli::Cli::parse();
    if let Err(err) = ssp_cli::run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(ssp_cli::exit_code(&err));
    }
}
