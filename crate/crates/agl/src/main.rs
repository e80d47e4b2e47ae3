use std::process::ExitCode;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(
    name = "agl",
    version,
    about = "Agentic graph learning environment engine"
)]
struct Cli {
    #[command(subcommand)]
    command: agl::commands::Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AGL_LOG", "warn")).init();
    let cli = Cli::parse();
    match agl::commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
