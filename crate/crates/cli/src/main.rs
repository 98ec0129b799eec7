use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod commands;
mod recipe;

/// Stereotype elicitation, emotion profiling and fine-tuning drift for
/// masked language models.
///
/// Models are given as backend specs: `fixture:<file.json>`,
/// `desk:<model.json>` or `bridge:<hf-checkpoint-or-dir>`.
#[derive(Parser)]
#[command(name = "stereoprobe", version, arg_required_else_help = true)]
struct Cli {
    /// TOML run configuration. Flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct GroupArgs {
    /// Registry file (`category<TAB>name` rows) restricting the groups.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// A single group by name; repeatable.
    #[arg(long = "group")]
    pub group: Vec<String>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Collect autocomplete suggestions and curate them into a new dataset.
    Harvest {
        /// Comma-separated engines (google, yahoo, duckduckgo).
        #[arg(long, value_delimiter = ',')]
        engines: Vec<String>,
        #[command(flatten)]
        groups: GroupArgs,
        #[arg(long)]
        out: PathBuf,
        /// Read engine payloads from a fixture directory instead of the network.
        #[arg(long, conflicts_with = "record")]
        replay: Option<PathBuf>,
        /// Save every live payload under this directory for later replay.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Queue part-of-speech rejects for review instead of dropping them.
        #[arg(long)]
        manual_review: bool,
        /// Replace an existing output file.
        #[arg(long)]
        force: bool,
    },
    /// Elicit typicality-ranked attributes for groups.
    Probe {
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        groups: GroupArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall@k of a dataset's attributes among a model's predictions.
    Recall {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma-separated k grid, each in 1..=200.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Match after crude suffix stripping (sensitivity analysis only).
        #[arg(long)]
        stemmed: bool,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one SVG per category here.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Emotion profiles of the groups' elicited attributes.
    Emotions {
        /// Backend spec or prediction cache directory.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        groups: GroupArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Emotion RSMs per model and the model-by-model RSA grid.
    Rsa {
        /// Comma-separated backend specs or cache directories.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[command(flatten)]
        groups: GroupArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Continue masked-LM training on a (subsampled) corpus.
    Finetune {
        #[arg(long)]
        model: Option<String>,
        /// JSON-lines or CSV corpus with a `text` or `content` field.
        #[arg(long)]
        corpus: PathBuf,
        /// Share of the corpus to train on, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus label used in the new model id; defaults to the file stem.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a model before and after fine-tuning.
    Diff {
        /// Backend spec or prediction cache directory.
        #[arg(long)]
        before: String,
        #[arg(long)]
        after: String,
        /// Model id to read when a cache directory holds several.
        #[arg(long)]
        before_model: Option<String>,
        #[arg(long)]
        after_model: Option<String>,
        /// Attributes per template compared for added/removed/persisted.
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        groups: GroupArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Label of the fine-tuning corpus.
        #[arg(long, default_value = "unknown")]
        source: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Render SVG figures from existing artifacts. Never touches a backend.
    Report {
        /// Artifact JSON files.
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the small native masked LM on a synthetic corpus.
    DeskInit {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk-mini")]
        model_id: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Sentences per group and template in the synthetic corpus.
        #[arg(long)]
        per_group: Option<usize>,
    },
    /// Print the command sequence of an end-to-end run.
    Recipe {
        /// The nine full-size checkpoints and news corpora instead of the
        /// desk-scale substitute.
        #[arg(long)]
        full_scale: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let name = commands::name(&cli.command);
    match commands::run(cli.config.as_deref(), cli.command) {
        Ok(outcome) => {
            if outcome.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                let record = json!({
                    "status": "partial",
                    "command": name,
                    "failed_groups": outcome.failed,
                });
                eprintln!("{record}");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            let kind = e
                .downcast_ref::<stereoprobe::Error>()
                .map(stereoprobe::Error::kind)
                .unwrap_or("cli");
            let record = json!({
                "status": "error",
                "command": name,
                "kind": kind,
                "message": format!("{e:#}"),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
