use clap::{Parser, Subcommand};

use uavnav_cli::{
    cmd_density, cmd_evaluate, cmd_gen_data, cmd_train, exit_code_for, print_summary,
    DensityArgs, EvaluateArgs, GenDataArgs, TrainArgs,
};

/// Uncertainty-aware UAV gate navigation: data synthesis, training,
/// closed-loop evaluation, and density export.
#[derive(Parser)]
#[command(name = "uavnav", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a perception or control dataset.
    GenData(GenDataArgs),
    /// Train the perception encoder/decoder or the control policies.
    Train(TrainArgs),
    /// Run the closed-loop gates-passed evaluation for one variant cell.
    Evaluate(EvaluateArgs),
    /// Export latent samples, control densities, MI scores, and both
    /// strategies' commands for a scenario observation.
    Density(DensityArgs),
}

fn main() {
    let cli = Cli::parse();
    let stdout = &mut std::io::stdout();
    let result = match &cli.command {
        Command::GenData(args) => cmd_gen_data(args).and_then(|s| print_summary(stdout, &s)),
        Command::Train(args) => cmd_train(args).and_then(|s| print_summary(stdout, &s)),
        Command::Evaluate(args) => cmd_evaluate(args).and_then(|s| print_summary(stdout, &s)),
        Command::Density(args) => cmd_density(args).and_then(|s| print_summary(stdout, &s)),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code_for(&err));
    }
}
