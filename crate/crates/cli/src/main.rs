//! Command line entry point. Exit codes: 0 on success, 2 on configuration
//! errors, 3 on training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tenframe::mp::{FrameKind, MessageMode};
use tenframe::Error;

use tenframe_cli::ablate::{ablation_csv, ablation_matrix, data_efficiency_sweep, sweep_csv};
use tenframe_cli::audits::{audit_equivariance, audit_frame_stability};
use tenframe_cli::datasets::{gen_dataset, read_dataset, write_dataset, Dataset, TaskKind};
use tenframe_cli::taskspec::TaskSpec;
use tenframe_cli::train::{load_pipeline, train, write_outputs};

#[derive(Parser)]
#[command(name = "tenframe", about = "Equivariant message passing on point clouds: data generation, training and audits", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Normals,
    Relay,
    Classify,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> TaskKind {
        match t {
            TaskArg::Normals => TaskKind::NormalRegression,
            TaskArg::Relay => TaskKind::DirectionalRelay,
            TaskArg::Classify => TaskKind::ShapeClassification,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Scalar,
    Tensorial,
}

#[derive(Clone, Copy, ValueEnum)]
enum FramesArg {
    Learned,
    Pca,
    Random,
    Constant,
    Identity,
}

#[derive(Args)]
struct SpecArgs {
    /// Task to run (ignored when --config provides one).
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Task spec JSON overriding the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Message mode applied to every layer.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Frame provenance.
    #[arg(long, value_enum)]
    frames: Option<FramesArg>,
    /// Enable frame refinement after message/encoder layers.
    #[arg(long)]
    refine: bool,
    /// Number of training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Position jitter σ applied when generating the dataset.
    #[arg(long)]
    noise: Option<f64>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<TaskSpec, Error> {
        let base = match (&self.config, self.task) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| Error::Config {
                    layer: None,
                    msg: format!("{}: {e}", path.display()),
                })?
            }
            (None, Some(task)) => TaskSpec::defaults(task.into()),
            (None, None) => {
                return Err(Error::Config {
                    layer: None,
                    msg: "either --task or --config is required".into(),
                })
            }
        };
        Ok(base.with_overrides(
            self.seed,
            self.mode.map(|m| match m {
                ModeArg::Scalar => MessageMode::Scalar,
                ModeArg::Tensorial => MessageMode::Tensorial,
            }),
            self.frames.map(|f| match f {
                FramesArg::Learned => FrameKind::Learned,
                FramesArg::Pca => FrameKind::Pca,
                FramesArg::Random => FrameKind::Random,
                FramesArg::Constant => FrameKind::Constant,
                FramesArg::Identity => FrameKind::Identity,
            }),
            self.refine.then_some(true),
            self.steps,
            self.noise,
        ))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes report.json, metrics.csv and checkpoint.
    Train {
        #[command(flatten)]
        spec: SpecArgs,
        /// Dataset directory from gen-data; generated in memory if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Audit output equivariance of a trained checkpoint.
    AuditEquivariance {
        /// Directory holding checkpoint.bin / checkpoint.json.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        transforms: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Audit frame stability under position jitter.
    AuditStability {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated jitter magnitudes.
        #[arg(long, default_value = "0.0,0.005,0.01,0.02,0.05")]
        sigmas: String,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train the frames × messages ablation grid.
    Ablate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Data-efficiency sweep: equivariant vs augmented per fraction.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "0.25,0.5,1.0")]
        fractions: String,
        #[arg(long)]
        quiet: bool,
    },
}

fn load_data(spec: &TaskSpec, data: &Option<PathBuf>) -> Result<Dataset, Error> {
    match data {
        Some(dir) => read_dataset(dir),
        None => gen_dataset(spec.task, &spec.dataset, spec.train.seed),
    }
}

fn parse_floats(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| Error::Config {
                layer: None,
                msg: format!("bad number `{t}`"),
            })
        })
        .collect()
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(value).expect("json"))?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { spec, out } => {
            let spec = spec.resolve()?;
            let data = gen_dataset(spec.task, &spec.dataset, spec.train.seed)?;
            write_dataset(&out, spec.task, &spec.dataset, spec.train.seed, &data)?;
            println!(
                "wrote {} train / {} eval samples to {}",
                data.train.len(),
                data.eval.len(),
                out.display()
            );
        }
        Command::Train { spec, data, out, quiet } => {
            let spec = spec.resolve()?;
            let dataset = load_data(&spec, &data)?;
            let mut outcome = train(&spec, &dataset, quiet)?;
            write_outputs(&out, &mut outcome)?;
            println!(
                "final metric {:.4} (loss {:.5}); outputs in {}",
                outcome.report.final_metric,
                outcome.report.final_loss,
                out.display()
            );
        }
        Command::AuditEquivariance { checkpoint, out, transforms, seed, data } => {
            let (mut pipeline, spec) = load_pipeline(&checkpoint)?;
            let dataset = load_data(&spec, &data)?;
            let audit = audit_equivariance(&mut pipeline, &dataset.eval, transforms, seed)?;
            println!(
                "worst deviation {:.3e}, worst translation deviation {:.3e}",
                audit.worst, audit.worst_translation
            );
            write_json(
                &out.join("report.json"),
                &serde_json::json!({
                    "kind": "equivariance-audit",
                    "checkpoint": checkpoint.display().to_string(),
                    "config": serde_json::to_value(&spec).expect("spec"),
                    "transforms": transforms,
                    "seed": seed,
                    "audit": serde_json::to_value(&audit).expect("audit"),
                }),
            )?;
        }
        Command::AuditStability { checkpoint, out, sigmas, seed, data } => {
            let (mut pipeline, spec) = load_pipeline(&checkpoint)?;
            let kind = spec.pipeline.frames.kind;
            if kind != FrameKind::Learned && kind != FrameKind::Pca {
                return Err(Error::Config {
                    layer: None,
                    msg: format!("frame stability audit needs learned or pca frames, got {kind:?}"),
                });
            }
            let dataset = load_data(&spec, &data)?;
            let sigmas = parse_floats(&sigmas)?;
            let rows = audit_frame_stability(&mut pipeline, &dataset.eval, &sigmas, seed)?;
            for r in &rows {
                println!(
                    "sigma {:>7.4}: frobenius {:.5}, axis cosines ({:.4}, {:.4}, {:.4})",
                    r.sigma, r.mean_frobenius, r.axis_cosines[0], r.axis_cosines[1], r.axis_cosines[2]
                );
            }
            write_json(
                &out.join("report.json"),
                &serde_json::json!({
                    "kind": "frame-stability-audit",
                    "frames": kind,
                    "config": serde_json::to_value(&spec).expect("spec"),
                    "seed": seed,
                    "rows": serde_json::to_value(&rows).expect("rows"),
                }),
            )?;
        }
        Command::Ablate { spec, out, quiet } => {
            let spec = spec.resolve()?;
            let dataset = load_data(&spec, &None)?;
            let report = ablation_matrix(&spec, &dataset, quiet)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("ablation.csv"), ablation_csv(&report))?;
            write_json(
                &out.join("report.json"),
                &serde_json::json!({
                    "kind": "ablation",
                    "config": serde_json::to_value(&spec).expect("spec"),
                    "report": serde_json::to_value(&report).expect("report"),
                }),
            )?;
            for c in &report.cells {
                println!(
                    "{:>8} frames × {:>9} messages: metric {:.4} ({} params)",
                    c.frames, c.mode, c.final_metric, c.param_count
                );
            }
        }
        Command::Sweep { spec, out, fractions, quiet } => {
            let spec = spec.resolve()?;
            let dataset = load_data(&spec, &None)?;
            let fractions = parse_floats(&fractions)?;
            for f in &fractions {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(Error::Config {
                        layer: None,
                        msg: format!("fraction {f} outside (0, 1]"),
                    });
                }
            }
            let rows = data_efficiency_sweep(&spec, &dataset, &fractions, quiet)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("sweep.csv"), sweep_csv(&rows))?;
            write_json(
                &out.join("report.json"),
                &serde_json::json!({
                    "kind": "data-efficiency-sweep",
                    "config": serde_json::to_value(&spec).expect("spec"),
                    "rows": serde_json::to_value(&rows).expect("rows"),
                }),
            )?;
            for r in &rows {
                println!("fraction {:.3} {:>11}: error {:.4}", r.fraction, r.mode, r.final_error);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Divergence { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
