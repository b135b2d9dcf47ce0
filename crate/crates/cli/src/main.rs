mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(run) => commands::cmd_analyze(run),
        Command::Train(run) => commands::cmd_train(run),
        Command::Eval { run, artifacts, split } => commands::cmd_eval(run, artifacts.as_deref(), split),
        Command::Ablate { run, variants } => commands::cmd_ablate(run, variants),
        Command::Theory { calc } => commands::cmd_theory(calc),
        Command::Bench(run) => commands::cmd_bench(run),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
