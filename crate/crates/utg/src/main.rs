use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use utg::config::ExperimentConfig;
use utg::dataset::{export_dataset, import_dataset};
use utg::error::HarnessError;
use utg::model_io::ModelBundle;
use utg::pipeline::{self, Observer, TrainedModels};
use utg::traces::TraceWriter;

#[derive(Parser)]
#[command(name = "utg", version, about = "UWB tagless-gate simulator and experiment harness")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic labelled CIR dataset as CSV.
    SynthData,
    /// Train the classifier and pose models and write a model bundle.
    Train {
        /// Train on this CIR dataset instead of synthesizing one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Held-out and per-pose LOS/NLOS accuracy of a trained classifier.
    EvalClassifier {
        #[arg(long)]
        models: PathBuf,
    },
    /// End-to-end pose accuracy on synthetic streams.
    EvalPose {
        #[arg(long)]
        models: PathBuf,
    },
    /// Paired localization walk-ins for every scheme.
    RunLocalization {
        #[arg(long)]
        models: PathBuf,
    },
    /// Gate walk-ins under the pose-adaptive and pose-agnostic policies.
    RunGate,
    /// Full experiment: train (unless models are given), evaluate and export
    /// the metrics report.
    Report {
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

fn load_models(path: &Path) -> Result<TrainedModels, HarnessError> {
    Ok(ModelBundle::load(path)?.models()?)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut obs = TraceWriter::new(out, !cli.quiet).map_err(io_err(out))?;
    let layout = cfg.world()?;

    match &cli.command {
        Command::SynthData => {
            let records = pipeline::synth_cir_records(&cfg)?;
            let path = out.join("dataset.csv");
            export_dataset(&path, &records)?;
            obs.log(&format!("wrote {} rows to {}", records.len(), path.display()));
        }
        Command::Train { dataset } => {
            let records = dataset.as_deref().map(import_dataset).transpose()?;
            let models = pipeline::train_all(&cfg, records, &mut obs)?;
            let path = out.join("models.json");
            ModelBundle::new(&models).save(&path)?;
            write_json(&out.join("held_out.json"), &models.held_out)?;
            obs.log(&format!("wrote {}", path.display()));
        }
        Command::EvalClassifier { models } => {
            let m = load_models(models)?;
            let rows = pipeline::classification_rows(&cfg, &m.classifier)?;
            write_json(&out.join("classification.json"), &rows)?;
            for r in &rows {
                println!("{:<5} raw {:.3} filtered {:.3}", r.pose.as_str(), r.raw, r.filtered);
            }
        }
        Command::EvalPose { models } => {
            let m = load_models(models)?;
            let rows = pipeline::pose_rows(&cfg, &layout, &m.classifier, &m.pose, &mut obs)?;
            write_json(&out.join("pose.json"), &rows)?;
            for r in &rows {
                println!("{:<5} condition {:.3} pose {:.3}", r.pose.as_str(), r.condition_accuracy, r.pose_accuracy);
            }
        }
        Command::RunLocalization { models } => {
            let m = load_models(models)?;
            let rows = pipeline::localization_rows(&cfg, &layout, &m.classifier, &mut obs)?;
            write_json(&out.join("localization.json"), &rows)?;
            for r in &rows {
                println!(
                    "{:<4} {:<10} mean {:6.2} cm  std {:6.2} cm  fixes {}",
                    r.scenario.as_str(),
                    r.scheme.as_str(),
                    r.mean_cm,
                    r.std_cm,
                    r.fixes
                );
            }
        }
        Command::RunGate => {
            let rows = pipeline::gate_rows(&cfg, &layout, &mut obs)?;
            write_json(&out.join("gate.json"), &rows)?;
            for r in &rows {
                println!(
                    "{:?} {:<5} opened {}/{} at {:.1} cm",
                    r.policy,
                    r.pose.as_str(),
                    r.opened,
                    r.walk_ins,
                    r.mean_open_distance_cm
                );
            }
        }
        Command::Report { models } => {
            let m = match models {
                Some(p) => load_models(p)?,
                None => {
                    let m = pipeline::train_all(&cfg, None, &mut obs)?;
                    ModelBundle::new(&m).save(&out.join("models.json"))?;
                    m
                }
            };
            let report = pipeline::run_experiment(&cfg, &m, &mut obs)?;
            let dir = out.join("report");
            for p in report.export(&dir)? {
                obs.log(&format!("wrote {}", p.display()));
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    obs.finish().map_err(io_err(out))
}
