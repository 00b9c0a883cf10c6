//! `formgraph`: prepare corpora, train, predict, evaluate and run ablations.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use formgraph::eval::Decoder;

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Fail {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Fail { code: 1, error: error.into() }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Fail { code: 2, error: error.into() }
    }
}

impl From<formgraph::Error> for Fail {
    fn from(e: formgraph::Error) -> Self {
        use formgraph::Error as E;
        let code = match &e {
            E::Config(_) => 1,
            E::MalformedGraph(_)
            | E::TypeConflict(_)
            | E::Parse { .. }
            | E::DocumentMismatch(_)
            | E::Io { .. }
            | E::Json(_) => 2,
            E::Infeasible(_) | E::TooLarge { .. } | E::Divergence { .. } => 3,
        };
        Fail { code, error: e.into() }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::data(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "formgraph", version, about = "Form understanding from word boxes")]
struct Cli {
    /// Worker threads for document-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Regenerate gold graphs from entity annotations and write a canonical corpus.
    Prepare(PrepareArgs),
    /// Train the scorer and write a checkpoint plus a training log.
    Train(TrainArgs),
    /// Score and decode a corpus with a checkpoint.
    Predict(PredictArgs),
    /// Compare predicted graphs with gold graphs.
    Evaluate(EvaluateArgs),
    /// Run an ablation suite.
    Ablate(AblateArgs),
    /// Write a synthetic corpus in the FUNSD directory layout.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["funsd_dir", "xfund_dir"])))]
pub struct PrepareArgs {
    /// FUNSD root (with training_data/ and testing_data/) or a flat folder
    /// of annotation files.
    #[arg(long)]
    pub funsd_dir: Option<PathBuf>,
    /// Folder holding `{lang}.train.json` and `{lang}.val.json`.
    #[arg(long, requires = "lang")]
    pub xfund_dir: Option<PathBuf>,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Config file and the overrides every pipeline command accepts.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighborhood size.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Prepared corpus (with train/ and validation/, or flat).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// Training log path; defaults to the checkpoint path with `.log.json`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DecoderArg {
    Greedy,
    Ilp,
}

impl From<DecoderArg> for Decoder {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::Greedy => Decoder::Greedy,
            DecoderArg::Ilp => Decoder::Ilp,
        }
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prepared corpus; its test/ folder is used when present.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub decoder: Option<DecoderArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// Solver time limit per document, in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Solver node limit per document.
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// TOML run configuration (decoding and constraint sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Level {
    Word,
    Entity,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predictions folder, or any folder of canonical documents.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold corpus; its test/ folder is used when present.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "word")]
    pub level: Level,
    /// Report file (JSON); the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SuiteArg {
    Constraints,
    EdgeFeatures,
    Neighborhood,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Prepared corpus with train/, validation/ and test/.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    /// Neighborhood sizes for the neighborhood suite.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    pub k: Vec<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report file: JSON for the constraint and edge-feature suites, CSV for
    /// the neighborhood suite. Printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub train: usize,
    #[arg(long, default_value_t = 10)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "en")]
    pub lang: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Fail> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Fail::usage(anyhow::anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Fail { code: 3, error: e.into() })?;
    }
    match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}
