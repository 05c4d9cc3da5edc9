//! Command-line surface. Flags are optional overrides of the run config.

use std::path::PathBuf;

use advneg_core::corpus::{AdversarialSource, Split};
use advneg_core::negatives::NegativeMethod;
use advneg_core::prompt::{ExampleFraction, InstructionType};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "advneg", version, about = "Adversarial negative generation and response-selection evaluation")]
pub struct Cli {
    /// TOML run config; `${VAR}` is read from the environment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use the offline synthetic completion backend.
    #[arg(long, global = true)]
    pub mock: bool,
    /// -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LlmFlags {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long = "freq-penalty")]
    pub frequency_penalty: Option<f64>,
    #[arg(long = "pres-penalty")]
    pub presence_penalty: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// JSONL of canned completions keyed by prompt hash.
    #[arg(long)]
    pub canned: Option<PathBuf>,
    #[arg(long)]
    pub attempt_cap: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PromptFlags {
    /// dir, pos or imp.
    #[arg(long)]
    pub instruction: Option<InstructionType>,
    #[arg(long = "k")]
    pub k: Option<usize>,
    /// 0.1, 1, 10 or 100 (percent of the demonstration source).
    #[arg(long)]
    pub e_fraction: Option<ExampleFraction>,
    /// Append each clean generation to the example set.
    #[arg(long)]
    pub reuse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssembleKind {
    Train,
    RandomTest,
    AdvTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    E,
    K,
    Instruction,
    Augmentation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a dataset release into native JSONL records.
    Ingest {
        #[arg(long)]
        format: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
    },
    /// Build candidate instances (11-wide train or 6-wide test).
    Assemble {
        #[arg(long, value_enum)]
        kind: AssembleKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "random")]
        neg_source: AdversarialSource,
        /// Negative table for generated, bm25 and semihard sources.
        #[arg(long)]
        negatives: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prompt utilities.
    Prompt {
        #[command(subcommand)]
        action: PromptCommand,
    },
    /// Generate adversarial negatives with the completion backend.
    Generate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Demonstration source; defaults to the input corpus.
        #[arg(long)]
        examples: Option<PathBuf>,
        #[command(flatten)]
        prompt: PromptFlags,
        #[command(flatten)]
        llm: LlmFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve baseline negatives.
    Negatives {
        #[arg(long)]
        method: Option<NegativeMethod>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// tfidf or file:<path>.
        #[arg(long)]
        embeddings: Option<String>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the listwise ranker.
    Train {
        #[arg(long)]
        train_instances: PathBuf,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// R@1 and MRR on one or more test sets.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Instances the model was trained on; they define the feature statistics.
        #[arg(long)]
        train_instances: PathBuf,
        /// NAME=PATH, repeatable.
        #[arg(long = "test", value_parser = parse_named_path, required = true)]
        tests: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prediction-score and similarity statistics per response type.
    Quality {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train_instances: PathBuf,
        /// JSONL of {"type", "context", "response"}.
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        embeddings: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlap between demonstrations and generated negatives.
    Contamination {
        /// Generation records written by `generate`.
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid.
    Ablate {
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        axes: Vec<Axis>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Extra contexts for the augmentation axis.
        #[arg(long)]
        augmentation_contexts: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Use a synthetic corpus of this many training contexts.
        #[arg(long)]
        synthetic: Option<usize>,
        #[command(flatten)]
        llm: LlmFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// generate, assemble, train, eval and reports in one run.
    Pipeline {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        synthetic: Option<usize>,
        #[command(flatten)]
        prompt: PromptFlags,
        #[command(flatten)]
        llm: LlmFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum PromptCommand {
    /// Render the prompt for one target.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        target_id: String,
        #[command(flatten)]
        prompt: PromptFlags,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "validation" | "valid" | "dev" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split {other:?}")),
    }
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}
