//! `maskpolicy`: build vocabularies, train a span-masking policy, evaluate
//! it against baselines and mask a corpus with it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use config::{ModeArg, PolicyKind};

#[derive(Parser, Debug)]
#[command(name = "maskpolicy", version, about = "Learned span masking for intermediate pre-training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a frequency-ranked vocabulary from plain-text corpus files.
    BuildVocab(BuildVocabArgs),
    /// Train the span policy on anchor (context, question, answer) data.
    TrainPolicy(TrainArgs),
    /// Score a policy's span proposals against held-out anchor answers.
    EvalPolicy(EvalArgs),
    /// Corrupt a corpus into masked denoising examples.
    MaskCorpus(MaskArgs),
    /// Rank evaluation reports side by side.
    Compare(CompareArgs),
    /// Check policy gradients against finite differences.
    GradCheck(GradCheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildVocab(_) => "build-vocab",
            Command::TrainPolicy(_) => "train-policy",
            Command::EvalPolicy(_) => "eval-policy",
            Command::MaskCorpus(_) => "mask-corpus",
            Command::Compare(_) => "compare",
            Command::GradCheck(_) => "grad-check",
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Run directory for artifacts and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy build-vocab --corpus <PATH>... --out <DIR> [--max-size <INT>] [--min-freq <INT>] [--config <PATH>]")]
struct BuildVocabArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH", num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Vocabulary size including the reserved tokens.
    #[arg(long, value_name = "INT")]
    max_size: Option<usize>,
    #[arg(long, value_name = "INT")]
    min_freq: Option<usize>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy train-policy --train <PATH> --valid <PATH> --out <DIR> [--vocab <PATH>] [--config <PATH>] [--seed <INT>] [--max-span-len <INT>] [--epochs <INT>]")]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH")]
    train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    valid: Option<PathBuf>,
    /// Existing vocabulary; built from the training contexts when absent.
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long, value_name = "INT")]
    max_span_len: Option<usize>,
    #[arg(long, value_name = "INT")]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy eval-policy --dev <PATH> --policy <randomspan|salient|learned> --out <DIR> [--checkpoint <PATH> --vocab <PATH>] [--masked <PATH>] [--max-span-len <INT>] [--seed <INT>] [--config <PATH>]")]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH")]
    dev: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long, value_name = "INT")]
    max_span_len: Option<usize>,
    /// Masked corpus (JSONL) for answer coverage of the dev answers.
    #[arg(long, value_name = "PATH")]
    masked: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy mask-corpus --corpus <PATH>... --vocab <PATH> --policy <random15|randomspan|salient|learned> --out <DIR> [--checkpoint <PATH>] [--mode <top1|top5>] [--seed <INT>] [--workers <INT>] [--chunk-len <INT>] [--max-span-len <INT>] [--config <PATH>]")]
struct MaskArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH", num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_name = "INT")]
    max_span_len: Option<usize>,
    #[arg(long, value_name = "INT")]
    chunk_len: Option<usize>,
    #[arg(long, value_name = "INT")]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy compare --reports <PATH> <PATH>... --out <DIR> [--config <PATH>]")]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH", num_args = 1..)]
    reports: Vec<PathBuf>,
}

#[derive(Args, Debug)]
#[command(override_usage = "maskpolicy grad-check --out <DIR> [--seeds <INT>] [--seed <INT>] [--config <PATH>]")]
struct GradCheckArgs {
    #[command(flatten)]
    common: Common,
    /// Number of random instances.
    #[arg(long, value_name = "INT")]
    seeds: Option<usize>,
}

/// A required setting that neither a flag nor the config supplied.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn synopsis(name: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    cmd.find_subcommand_mut(name)
        .map(|c| c.render_usage().to_string())
        .unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let name = cli.command.name();
    let result = match cli.command {
        Command::BuildVocab(a) => commands::build_vocab(a),
        Command::TrainPolicy(a) => commands::train_policy(a),
        Command::EvalPolicy(a) => commands::eval_policy(a),
        Command::MaskCorpus(a) => commands::mask_corpus(a),
        Command::Compare(a) => commands::compare(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => {
                eprintln!("error: {u}\n\n{}", synopsis(name));
                ExitCode::from(1)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
