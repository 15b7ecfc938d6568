mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const LONG_ABOUT: &str = "\
Reference-game pipeline: ingest a corpus of games, construct utterance \
alternatives (logical enumeration and/or model n-best generation), score the \
alternatives with a language model and with pragmatic-speaker tables, then \
correlate the two.

The published reference results this pipeline is built around (per-group PCC \
0.291 on generated and 0.303 on logical utterance sets, SRCC 0.606 and 0.736, \
from 88,310 generated and 298,200 logical utterances over 2,940 games) came \
from the full TUNA furniture corpus and a live Llama-3-8B-Instruct completion \
endpoint. Neither ships with this tool, so those numbers are not reproducible \
offline. `--mock` runs exercise every stage deterministically without an \
endpoint; given a TUNA directory and an endpoint, `score --paper-faithful` \
recreates the original scoring setup.";

#[derive(Parser)]
#[command(
    name = "refgame",
    version,
    about = "Reference-game pipeline: utterance spaces, model scores, pragmatic-speaker tables",
    long_about = LONG_ABOUT
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read TUNA XML trials or generate a synthetic corpus; write canonical games
    Ingest(IngestArgs),
    /// Build per-game utterance spaces by logical enumeration and/or generation
    Utterances(UtterancesArgs),
    /// Score every utterance with the model and with speaker tables; write records
    Score(ScoreArgs),
    /// Correlate model scores with speaker probabilities; write reports and plots
    Analyze(AnalyzeArgs),
    /// Evaluate meaning functions against a labelled (object, utterance) file
    EvalMf(EvalMfArgs),
    /// Pooled correlation per rationality value from an existing records file
    SweepAlpha(SweepAlphaArgs),
}

/// Which source of alternatives `utterances` builds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpaceMode {
    /// Every feature bundle true of at least one object, realized as text
    Logic,
    /// n-best generations from the model, deduplicated
    Topk,
    /// Logical enumeration merged with generations
    Both,
}

/// Model selection shared by every stage that scores or generates.
#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Deterministic in-process stand-in for a completion endpoint
    #[arg(long)]
    pub mock: bool,
    /// Seed for --mock
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base URL of an OpenAI-style completions endpoint
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Model identifier sent to the endpoint
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key
    #[arg(long, value_name = "VAR")]
    pub api_key_env: Option<String>,
    /// Response cache directory; with --base-url it records, alone it replays
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["tuna_dir", "synthetic"]))]
pub struct IngestArgs {
    /// Directory of TUNA furniture XML trial files
    #[arg(long, value_name = "DIR")]
    pub tuna_dir: Option<PathBuf>,
    /// Generate a seeded synthetic corpus instead of reading XML
    #[arg(long)]
    pub synthetic: bool,
    /// Seed for --synthetic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of games for --synthetic
    #[arg(long, default_value_t = 10)]
    pub games: usize,
    /// Objects per game for --synthetic
    #[arg(long, default_value_t = 7)]
    pub objects: usize,
    /// Collect unreadable XML files in the stats instead of aborting
    #[arg(long)]
    pub skip_bad: bool,
    /// Output corpus file (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct UtterancesArgs {
    /// Corpus file from `ingest`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Which alternatives to build
    #[arg(long, value_enum, default_value_t = SpaceMode::Both)]
    pub mode: SpaceMode,
    /// n-best width per start token
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Comma-separated start tokens generations are forced to begin with
    #[arg(long, default_value = "a,the")]
    pub starts: String,
    /// Generation prompt template file (defaults to the shipped template)
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Output utterance-space file (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Corpus file from `ingest`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Utterance-space file from `utterances`
    #[arg(long, value_name = "FILE")]
    pub utterances: PathBuf,
    /// Comma-separated meaning functions to score with: rule, prompt
    #[arg(long, default_value = "rule,prompt")]
    pub mf: String,
    /// Comma-separated rationality values for the speaker tables
    #[arg(long, default_value = "0.2,0.6,1.0,1.4,1.8,3.0")]
    pub alphas: String,
    /// Utterance cost measure: word-count, token-count, or feature-count
    #[arg(long, default_value = "word-count")]
    pub cost_mode: String,
    /// Reuse each generated candidate's own n-best score instead of rescoring it
    #[arg(long, conflicts_with = "rescore_all")]
    pub paper_faithful: bool,
    /// Score every utterance with a fresh forced-continuation pass (the default)
    #[arg(long)]
    pub rescore_all: bool,
    /// Worked examples in the prompt meaning function (3 or 6)
    #[arg(long, default_value_t = 3)]
    pub shots: usize,
    /// Scoring context template file (defaults to the generation template)
    #[arg(long, value_name = "FILE")]
    pub context_template: Option<PathBuf>,
    /// Prompt meaning-function template file
    #[arg(long, value_name = "FILE")]
    pub mf_template: Option<PathBuf>,
    /// Output records file (TSV)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Records file from `score` (TSV, or JSON lines with a .jsonl extension)
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    /// Rationality value the summary is reported at
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Which model score correlations use: normalized-prob or raw-logprob
    #[arg(long, default_value = "normalized-prob")]
    pub llm_score_mode: String,
    /// Also write the pooled-correlation-per-alpha sweep
    #[arg(long)]
    pub sweep_alpha: bool,
    /// Directory the reports and plots are written into
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalMfArgs {
    /// Labelled pairs file: one {"object", "utterance", "label"} per line
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Comma-separated meaning functions to evaluate: rule, prompt
    #[arg(long, default_value = "rule")]
    pub mf: String,
    /// Worked examples in the prompt meaning function (3 or 6)
    #[arg(long, default_value_t = 3)]
    pub shots: usize,
    /// Prompt meaning-function template file
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Directory the evaluation report is written into
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SweepAlphaArgs {
    /// Records file from `score`
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    /// Which model score correlations use: normalized-prob or raw-logprob
    #[arg(long, default_value = "normalized-prob")]
    pub llm_score_mode: String,
    /// Directory the sweep tables are written into
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(args) => stages::cmd_ingest(args),
        Command::Utterances(args) => stages::cmd_utterances(args),
        Command::Score(args) => stages::cmd_score(args),
        Command::Analyze(args) => stages::cmd_analyze(args),
        Command::EvalMf(args) => stages::cmd_eval_mf(args),
        Command::SweepAlpha(args) => stages::cmd_sweep_alpha(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
