use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use output::CliError;

/// Align speaker embedding spaces and evaluate asymmetric verification.
#[derive(Parser, Debug)]
#[command(name = "spkalign", version, about)]
struct Cli {
    /// Write the command's machine-readable output to stdout instead of --out.
    #[arg(long, global = true)]
    stdout: bool,

    /// Upper bound on worker threads. Every command currently runs on one.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate paired synthetic corpora for two embedding models, plus trials.
    Synth(SynthArgs),
    /// Average enrollment embeddings into voice profiles, optionally mapping
    /// them offline with an m2/m3 checkpoint.
    Profile(ProfileArgs),
    /// Fit the speaker-logit fusion transform on N shared speakers.
    LogitAlign(LogitArgs),
    /// Train an m1, m2 or m3 aligner.
    Train(TrainArgs),
    /// Score a trial list with one scorer.
    Score(ScoreArgs),
    /// Compute EER and FRR at fixed FARs from a score file.
    Eval(EvalArgs),
    /// Finite-difference check of all aligner loss gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON config `{"corpus": {...}, "n_target": .., "n_imposter": ..}`; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_x: PathBuf,
    #[arg(long)]
    pub out_y: PathBuf,
    /// Trial list drawn from the Y corpus. Skipped when absent.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the distortion maps; corpora sharing it share the two models.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub n_speakers: Option<usize>,
    #[arg(long)]
    pub n_enroll_utts: Option<usize>,
    #[arg(long)]
    pub n_runtime_utts: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub within_noise_x: Option<f64>,
    #[arg(long)]
    pub within_noise_y: Option<f64>,
    /// identity | orthogonal | affine | mlp_nonlinear
    #[arg(long)]
    pub distortion_x: Option<String>,
    #[arg(long)]
    pub distortion_y: Option<String>,
    #[arg(long)]
    pub anisotropy_x: Option<f64>,
    #[arg(long)]
    pub anisotropy_y: Option<f64>,
    #[arg(long)]
    pub nonlinear_gain: Option<f64>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub n_imposter: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// m2 or m3 checkpoint used to map the profiles into the target space.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Model id of the target space, used to tag mapped profiles.
    #[arg(long, default_value = "Y")]
    pub target_model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct LogitArgs {
    /// Alignment-training embeddings of model X.
    #[arg(long)]
    pub x: PathBuf,
    /// Alignment-training embeddings of model Y.
    #[arg(long)]
    pub y: PathBuf,
    /// Number of shared speakers forming the weight matrices.
    #[arg(long, default_value_t = 1000)]
    pub n_speakers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config `{"nessa": {...}, "val_fraction": ..}`; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training log, one JSON object per epoch.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// m1 | m2 | m3
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub w_init: Option<f64>,
    #[arg(long)]
    pub bank_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Two hidden widths, e.g. `800,800`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of training speakers held out for model selection.
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// cosine-sym-x | cosine-sym-y | cosine-asym-raw | logit-fused | nessa-m1 | nessa-m2 | nessa-m3
    #[arg(long)]
    pub scorer: String,
    /// Evaluation embeddings of model X (enrollment side).
    #[arg(long)]
    pub x: PathBuf,
    /// Evaluation embeddings of model Y (runtime side).
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub fusion: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Name recorded in the report.
    #[arg(long, default_value = "system")]
    pub scorer_id: String,
    /// Report of the baseline scorer; enables relative impact.
    #[arg(long)]
    pub baseline_report: Option<PathBuf>,
    /// Report of the symmetric-Y candidate; enables gap recovery.
    #[arg(long, requires = "baseline_report")]
    pub candidate_report: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = spkalign::metrics::REPORT_FARS)]
    pub fars: Vec<f64>,
    /// Operating point at which gap recovery is computed.
    #[arg(long, default_value_t = 0.05)]
    pub gap_far: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let stdout = cli.stdout;
    match cli.command {
        Command::Synth(a) => commands::synth(a, stdout),
        Command::Profile(a) => commands::profile(a, stdout),
        Command::LogitAlign(a) => commands::logit_align(a, stdout),
        Command::Train(a) => commands::train(a, stdout),
        Command::Score(a) => commands::score(a, stdout),
        Command::Eval(a) => commands::eval(a, stdout),
        Command::Gradcheck(a) => commands::gradcheck(a, stdout),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spkalign: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
