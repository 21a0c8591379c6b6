use clap::Parser;

fn main() {
    let cli = framex::cli::Cli::parse();
    std::process::exit(framex::cli::main_with(cli));
}
