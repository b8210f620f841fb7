//! Command-line front end for the `lasq` enhancement pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use std::io::Write;

use clap::{Parser, Subcommand};

pub use commands::*;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "lasq", version, about = "Statistical low-light image enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enhance one image (hierarchy-only, or with a trained denoiser).
    Enhance(EnhanceArgs),
    /// Write every hierarchy level plus a manifest.
    Hierarchy(HierarchyArgs),
    /// Low/normal luminance pairs and power-law exponent statistics.
    LvScan(LvScanArgs),
    /// Compare forward-process moments: closed form, exact recursion, Monte-Carlo.
    DiffuseSim(DiffuseSimArgs),
    /// Train the toy noise predictor on a directory of low-light images.
    TrainToy(TrainToyArgs),
    /// Run the implicit sampler from a checkpoint.
    Infer(InferArgs),
    /// Print `psnr_db,ssim` for two images.
    Eval(EvalArgs),
    /// Generate seeded synthetic ground-truth / low-light pairs.
    Synth(SynthArgs),
}

pub fn run(cli: &Cli, stdout: &mut impl Write) -> CliResult<()> {
    match &cli.command {
        Command::Enhance(a) => cmd_enhance(a),
        Command::Hierarchy(a) => cmd_hierarchy(a),
        Command::LvScan(a) => cmd_lv_scan(a),
        Command::DiffuseSim(a) => cmd_diffuse_sim(a),
        Command::TrainToy(a) => cmd_train_toy(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I, stdout: &mut impl Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run(&cli, stdout)
}
