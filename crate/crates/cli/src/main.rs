use clap::Parser;

fn main() {
    let cli = mlpcm_cli::Cli::parse();
    std::process::exit(mlpcm_cli::main_with(cli));
}
