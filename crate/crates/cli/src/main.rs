use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmm_core::model::Ablation;

mod commands;

#[derive(Parser)]
#[command(name = "mmm", version, about = "Drug-combination recommendation with ELF drug features and DDI-aware training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus directory, including one ELF volume per drug.
    Synth(SynthArgs),
    /// Compute pooled CNN features for every drug and write drug_features.csv.
    Featurize(FeaturizeArgs),
    /// Train a model; writes best.ckpt, last.ckpt and train_log.csv.
    Train(TrainArgs),
    /// Score a checkpoint on one split; writes metrics.csv and summary.json.
    Eval(EvalArgs),
    /// Paired bootstrap comparison of two checkpoints with t-tests.
    Compare(CompareArgs),
    /// Per-visit report for one patient with interacting pairs flagged.
    CaseStudy(CaseArgs),
    /// Train the full model and both ablations and tabulate test metrics.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub n_patients: usize,
    /// ELF grid as NX,NY,NZ (0.25 Å spacing).
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<[usize; 3]>,
    /// Skip ELF volume generation.
    #[arg(long)]
    pub no_elf: bool,
}

/// Hyperparameter overrides, applied on top of `--config` and the defaults.
#[derive(Args, Clone, Default)]
pub struct HyperArgs {
    /// key = value file with any hyperparameter.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Train the CNN end to end on raw patches.
    #[arg(long)]
    pub train_cnn: bool,
}

#[derive(Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Defaults to <data>/drug_features.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_parser = parse_drop)]
    pub drop: Option<Ablation>,
    /// Precomputed drug_features.csv used instead of the CNN.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = mmm_core::eval::DEFAULT_REPEATS)]
    pub repeats: usize,
    /// First bootstrap seed; defaults to the checkpoint's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[arg(long, default_value_t = mmm_core::eval::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub patient: u64,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = mmm_core::eval::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long)]
    pub features: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad grid dimension {p:?}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "grid needs three comma-separated sizes".to_string())
}

fn parse_drop(s: &str) -> Result<Ablation, String> {
    match s {
        "elf" => Ok(Ablation::DropElf),
        "bipartite" => Ok(Ablation::DropBipartite),
        other => Err(format!("expected elf or bipartite, got {other:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::CaseStudy(a) => commands::case_study(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
