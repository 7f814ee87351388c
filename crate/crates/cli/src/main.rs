use clap::Parser;

fn main() {
    let args = onsager_cli::cli::Args::parse();
    std::process::exit(onsager_cli::cli::execute(args));
}
