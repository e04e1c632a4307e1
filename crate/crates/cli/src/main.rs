//! `srx`: cross-modal retrieval driver.
//!
//! Exit codes separate failure classes so scripts can react: 2 for
//! invalid input or configuration, 3 for unreadable or malformed files,
//! 4 for numerical failures. Logging is controlled by `SRX_LOG`
//! (e.g. `SRX_LOG=info`).

mod actions;
mod config;

use clap::{Parser, Subcommand};
use srx_core::error::SrxError;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "srx", version, about = "Train and query a text-to-video retrieval model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset with learnable caption-clip structure.
    Synth(actions::SynthArgs),
    /// Train a model and write a checkpoint plus loss history.
    Train(actions::TrainArgs),
    /// Score every caption against every clip and write retrieval reports.
    Eval(actions::EvalArgs),
    /// Rank all clips for one caption.
    Retrieve(actions::RetrieveArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(actions::GradcheckArgs),
}

fn exit_code(e: &SrxError) -> u8 {
    match e {
        SrxError::Shape(_)
        | SrxError::Contract(_)
        | SrxError::Validation(_)
        | SrxError::Config(_) => 2,
        SrxError::Format { .. } | SrxError::Io(_) => 3,
        SrxError::Numerical(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter("SRX_LOG").write_style("SRX_LOG_STYLE"),
    )
    .init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Synth(args) => actions::cmd_synth(args),
        Cmd::Train(args) => actions::cmd_train(args),
        Cmd::Eval(args) => actions::cmd_eval(args),
        Cmd::Retrieve(args) => actions::cmd_retrieve(args),
        Cmd::Gradcheck(args) => actions::cmd_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
