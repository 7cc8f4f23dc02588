use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pfm::flow::FlowParams;
use pfm::harness::{
    evaluate_model, load_model, persist::describe_model, run_experiment, save_model,
    synth_generate, train_model, ExperimentConfig, ModelBundle, SynthParams,
};
use pfm::media::load_sequence;
use pfm::tracklets::{extract_tracklets, format_tracklet_line, TrackletParams};
use pfm::{PfmError, Result};

#[derive(Parser)]
#[command(
    name = "pfm",
    version,
    about = "Gait identification from dense motion descriptors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera walking dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        #[arg(long, default_value_t = 4)]
        cameras: usize,
        #[arg(long, default_value_t = 3)]
        trajectories: usize,
        #[arg(long, default_value_t = 36)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 112)]
        width: usize,
        #[arg(long, default_value_t = 80)]
        height: usize,
        /// Give every subject the same gait.
        #[arg(long)]
        shared_signature: bool,
    },
    /// Dump the tracklets and descriptors of one frame directory.
    Extract {
        /// Directory of numbered PGM/PPM frames.
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value = "c1")]
        camera: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        scales: usize,
        #[arg(long, default_value_t = 5)]
        grid_step: usize,
    },
    /// Train a model on the configured training trajectories.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the configured evaluation, or evaluate a saved model.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write per-sample predictions as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a summary of a saved model.
    InspectModel {
        #[arg(long)]
        model: PathBuf,
    },
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| PfmError::Io {
        path: path.clone(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            subjects,
            cameras,
            trajectories,
            frames,
            seed,
            width,
            height,
            shared_signature,
        } => {
            let p = SynthParams {
                subjects,
                cameras,
                trajectories,
                frames,
                seed,
                width,
                height,
                shared_signature,
            };
            synth_generate(&p, &out)?;
            println!(
                "wrote {} sequences to {}",
                subjects * cameras * trajectories,
                out.display()
            );
        }
        Command::Extract {
            seq,
            camera,
            out,
            scales,
            grid_step,
        } => {
            let frames = load_sequence::<f64>(&seq, &camera)?;
            let params = TrackletParams {
                n_scales: scales,
                grid_step,
                ..Default::default()
            };
            let found = extract_tracklets(&frames, &params, &FlowParams::default())?;
            let mut text = String::new();
            for (t, d) in found.tracklets.iter().zip(&found.descriptors) {
                text.push_str(&format_tracklet_line(t, d));
                text.push('\n');
            }
            write_file(&out, &text)?;
            println!(
                "{} tracklets written to {}",
                found.tracklets.len(),
                out.display()
            );
        }
        Command::Train { config, model } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bundle = train_model::<f64>(&cfg)?;
            save_model(&model, &bundle)?;
            print!("{}", describe_model(&bundle));
            println!("model written to {}", model.display());
        }
        Command::Eval { config, model, csv } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = match model {
                Some(m) => {
                    let bundle: ModelBundle<f64> = load_model(&m)?;
                    evaluate_model(&cfg, &bundle)?
                }
                None => run_experiment::<f64>(&cfg)?,
            };
            print!("{}", report.to_table());
            if let Some(path) = csv {
                write_file(&path, &report.to_csv())?;
            }
        }
        Command::InspectModel { model } => {
            let bundle: ModelBundle<f64> = load_model(&model)?;
            print!("{}", describe_model(&bundle));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
