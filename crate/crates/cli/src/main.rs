//! `gran`: trains a classifier, builds detection set-ups, extracts GraN and
//! LID features, fits the detectors and reports AUC-ROC.

mod config;
mod layout;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gran_core::data::Cause;
use gran_core::gran::DetectorKind;

use config::{usage, CliError, Overrides, RunConfig};
use layout::Layout;
use stages::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "gran", version, about = "Detect misclassified inputs from gradient norms")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Gaussian smoothing scale for GraN.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// L-infinity budget of FGSM and BIM.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// `synthetic`, a dataset name under the data root, or a directory.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Model checkpoint [default: <out>/model.ckpt].
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Set-ups to act on, comma separated [default: the config's list].
    #[arg(long, global = true, value_delimiter = ',')]
    setup: Vec<Cause>,
    /// Restrict to one detector [default: both].
    #[arg(long, global = true)]
    detector: Option<DetectorKind>,
    /// Directory holding named datasets.
    #[arg(long, global = true, env = "GRAN_DATA_ROOT", default_value = "data")]
    data_root: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the classifier on the dataset's training split.
    Train,
    /// Run the adversarial attacks and save their set-ups.
    Attack,
    /// Build every selected set-up (adversarial, wrong, noisy).
    BuildSetups,
    /// Extract detector features for each set-up.
    Extract,
    /// Fit a logistic-regression head per detector and set-up.
    FitDetector,
    /// Score the test partitions and time the detectors.
    Evaluate,
    /// Collect the evaluations into report.csv and report.txt.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        dataset: cli.dataset.clone(),
        sigma: cli.sigma,
        epsilon: cli.epsilon,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let causes = match cli.setup.is_empty() {
        true => config.setups.causes.clone(),
        false => cli.setup.clone(),
    };
    if causes.is_empty() {
        return Err(usage("no set-ups selected").into());
    }
    let layout = Layout::new(&cli.out, cli.model.as_deref());
    let _lock = layout.lock()?;
    let ctx = Pipeline {
        fingerprints: config.fingerprints()?,
        config,
        layout,
        data_root: cli.data_root,
        causes,
        detectors: cli.detector.map_or_else(|| DetectorKind::ALL.to_vec(), |d| vec![d]),
    };
    match cli.command {
        Command::Train => ctx.train(),
        Command::Attack => ctx.attack(),
        Command::BuildSetups => ctx.build_setups(&ctx.causes),
        Command::Extract => ctx.extract(),
        Command::FitDetector => ctx.fit_detector(),
        Command::Evaluate => ctx.evaluate(),
        Command::Report => ctx.report(),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.code as u8;
        }
        if let Some(e) = cause.downcast_ref::<gran_core::Error>() {
            use gran_core::Error as E;
            return match e {
                E::MissingArtifact(_) | E::ChecksumMismatch { .. } => 2,
                E::NonFinite { .. } | E::Divergence { .. } | E::Calibration { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
