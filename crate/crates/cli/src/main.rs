use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prnu_core::Error;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "prnu-forge", version, about = "PRNU camera fingerprints and attribution of stabilized video")]
struct Cli {
    /// JSON file supplying defaults for the command's options
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate an image-resolution fingerprint from still images
    FingerprintImages(commands::FingerprintImagesArgs),
    /// Find the image-to-video scale and crop and convert a fingerprint
    ConvertIv(commands::ConvertIvArgs),
    /// Aggregate a fingerprint from stabilized video frames alone
    FingerprintVideo(commands::FingerprintVideoArgs),
    /// Test whether a video comes from the fingerprint's camera
    Test(commands::TestArgs),
    /// Run a labeled experiment and report ROC, AUC and TPR
    Roc(commands::RocArgs),
    /// Generate a synthetic camera, images and stabilized videos
    Synth(commands::SynthArgs),
}

/// 2 for bad input or I/O, 3 when the algorithm has no answer.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConsensus(_) | Error::Class(_) | Error::DegenerateInput(_) | Error::Objective { .. } => 3,
        _ => 2,
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("PRNU_FORGE_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(0) => {}
        Ok(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size thread pool: {e}");
            }
        }
        Err(_) => log::warn!("ignoring PRNU_FORGE_THREADS={v}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::FingerprintImages(a) => commands::fingerprint_images(a, &file),
        Command::ConvertIv(a) => commands::convert_iv(a, &file),
        Command::FingerprintVideo(a) => commands::fingerprint_video(a, &file),
        Command::Test(a) => commands::test(a, &file),
        Command::Roc(a) => commands::roc(a, &file),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
