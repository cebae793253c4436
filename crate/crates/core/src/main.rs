use clap::Parser;

fn main() {
    let cli = nvscope::cli::Cli::parse();
    if let Err(e) = nvscope::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
