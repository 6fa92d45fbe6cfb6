use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leakaudit::corpus_io::{QueryFormat, Source};
use leakaudit::dataset_builder::{Kind, Scenario, GRID_SIZES};
use leakaudit::eval::{Gain, Metric, DEFAULT_DEPTH};
use leakaudit::leakage_id::{DEFAULT_NEIGHBORS, DEFAULT_TARGET_PRECISION, DEFAULT_THRESHOLD};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "leakaudit",
    version,
    about = "Train-test leakage auditing for retrieval training data",
    args_override_self = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Base seed; each stage derives its own seed from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Maximum worker threads (default: one per core)
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Output directory; receives the outputs and manifest.json
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file supplying defaults; explicit flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report format on stdout
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Nearest training queries for every topic field
    Candidates(CandidatesArgs),
    /// Stratified labeling sheet from a candidates file
    SampleSheet(SampleSheetArgs),
    /// Lowest threshold reaching a target precision on a labeled sheet
    Calibrate(CalibrateArgs),
    /// Attach reformulation types to candidates
    Classify(ClassifyArgs),
    /// Leaked topic and query counts at a threshold
    Report(ReportArgs),
    /// One training dataset
    Build(BuildArgs),
    /// Every scenario, kind and size of the experiment grid
    BuildGrid(BuildGridArgs),
    /// Per-topic metrics of a run
    Eval(EvalArgs),
    /// Paired t-tests of systems against a baseline
    SigTest(SigTestArgs),
    /// Cross-validated training size selection
    Cv(CvArgs),
    /// Ranks and scores of leaked documents with and without leakage
    Memorize(MemorizeArgs),
    /// Cohen's kappa between two labeled sheets
    Kappa(KappaArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Candidates(_) => "candidates",
            Command::SampleSheet(_) => "sample-sheet",
            Command::Calibrate(_) => "calibrate",
            Command::Classify(_) => "classify",
            Command::Report(_) => "report",
            Command::Build(_) => "build",
            Command::BuildGrid(_) => "build-grid",
            Command::Eval(_) => "eval",
            Command::SigTest(_) => "sig-test",
            Command::Cv(_) => "cv",
            Command::Memorize(_) => "memorize",
            Command::Kappa(_) => "kappa",
        }
    }
}

pub const SUBCOMMANDS: [&str; 12] = [
    "candidates",
    "sample-sheet",
    "calibrate",
    "classify",
    "report",
    "build",
    "build-grid",
    "eval",
    "sig-test",
    "cv",
    "memorize",
    "kappa",
];

/// A query file, optionally prefixed with its source: `[SOURCE=]PATH`.
/// Files ending in `.jsonl` are JSON lines, anything else is TSV.
#[derive(Debug, Clone, Serialize)]
pub struct QueryFile {
    pub source: Option<Source>,
    pub path: PathBuf,
}

impl QueryFile {
    pub fn format(&self) -> QueryFormat {
        let source = self.source.unwrap_or(Source::Other);
        if self.path.extension().is_some_and(|e| e == "jsonl") {
            QueryFormat::Jsonl(source)
        } else {
            QueryFormat::Tsv(source)
        }
    }
}

impl FromStr for QueryFile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('=') {
            Some((src, path)) => Ok(QueryFile {
                source: Some(src.parse()?),
                path: path.into(),
            }),
            None => Ok(QueryFile {
                source: None,
                path: s.into(),
            }),
        }
    }
}

/// A run file with a display name: `[NAME=]PATH`. The name defaults to the
/// file stem.
#[derive(Debug, Clone, Serialize)]
pub struct NamedRun {
    pub name: String,
    pub path: PathBuf,
}

impl FromStr for NamedRun {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, path) = match s.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let path = PathBuf::from(s);
                let stem = path.file_stem().map(|x| x.to_string_lossy().into_owned());
                (stem.ok_or_else(|| format!("run path {s:?} has no file name"))?, path)
            }
        };
        if name.is_empty() {
            return Err(format!("empty run name in {s:?}"));
        }
        Ok(NamedRun { name, path })
    }
}

/// `NAME,TOPICS,QRELS,CANDIDATES` for one benchmark of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioFiles {
    pub scenario: Scenario,
    pub topics: PathBuf,
    pub qrels: PathBuf,
    pub candidates: PathBuf,
}

impl FromStr for ScenarioFiles {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        let [name, topics, qrels, candidates] = parts[..] else {
            return Err(format!("expected NAME,TOPICS,QRELS,CANDIDATES, got {s:?}"));
        };
        Ok(ScenarioFiles {
            scenario: name.parse()?,
            topics: topics.into(),
            qrels: qrels.into(),
            candidates: candidates.into(),
        })
    }
}

fn parse_gain(s: &str) -> Result<Gain, String> {
    match s.to_ascii_lowercase().as_str() {
        "exp" | "exponential" => Ok(Gain::Exponential),
        "linear" => Ok(Gain::Linear),
        _ => Err(format!("unknown gain {s:?} (expected exponential or linear)")),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

#[derive(Debug, Args, Serialize)]
pub struct CandidatesArgs {
    /// EMB1 matrix of training query embeddings
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Row ids of --embeddings (default: <embeddings>.ids)
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Topics JSONL
    #[arg(long)]
    pub topics: PathBuf,
    /// EMB1 matrix of topic field embeddings, ids `topic#field#index`
    #[arg(long)]
    pub topic_embeddings: PathBuf,
    /// Row ids of --topic-embeddings (default: <topic-embeddings>.ids)
    #[arg(long)]
    pub topic_ids: Option<PathBuf>,
    /// Neighbors per topic field instance
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub k: usize,
    /// Upper bound on rows per scan block
    #[arg(long)]
    pub block_rows: Option<usize>,
}

impl CandidatesArgs {
    pub fn ids(&self) -> PathBuf {
        self.ids.clone().unwrap_or_else(|| with_suffix(&self.embeddings, ".ids"))
    }

    pub fn topic_ids(&self) -> PathBuf {
        self.topic_ids
            .clone()
            .unwrap_or_else(|| with_suffix(&self.topic_embeddings, ".ids"))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SampleSheetArgs {
    /// Candidates CSV
    #[arg(long)]
    pub candidates: PathBuf,
    /// Only pairs strictly above this similarity are sampled
    #[arg(long, default_value_t = 0.8)]
    pub floor: f32,
    /// Pairs to sample
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Width of the similarity strata
    #[arg(long, default_value_t = 0.02)]
    pub bin_width: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Labeled sheet CSV
    #[arg(long)]
    pub sheet: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TARGET_PRECISION)]
    pub target_precision: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// Candidates CSV
    #[arg(long)]
    pub candidates: PathBuf,
    /// Topics JSONL
    #[arg(long)]
    pub topics: PathBuf,
    /// Training queries as `[SOURCE=]PATH`; repeatable
    #[arg(long, required = true)]
    pub queries: Vec<QueryFile>,
    /// Unlabeled pairs below this similarity are different-topic
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub floor: f32,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Candidates CSV, labeled or not
    #[arg(long)]
    pub candidates: PathBuf,
    /// Pairs at or above this similarity count as leaks
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub theta: f32,
    /// Count only pairs labeled as leaks
    #[arg(long)]
    pub verified_only: bool,
    /// Training queries as `[SOURCE=]PATH`, for per-source columns
    #[arg(long)]
    pub queries: Vec<QueryFile>,
}

#[derive(Debug, Args, Serialize)]
pub struct PoolArgs {
    /// Training queries as `[SOURCE=]PATH`; only MSM and ORCAS are used
    #[arg(long, required = true)]
    pub queries: Vec<QueryFile>,
    /// Positive documents of the training queries (TREC qrels)
    #[arg(long)]
    pub train_qrels: PathBuf,
    /// BM25 run over the training queries, source of negatives
    #[arg(long)]
    pub bm25_run: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub scenario: Scenario,
    /// no-leakage, msm-leakage or test-leakage
    #[arg(long)]
    pub kind: Kind,
    /// Training instances; one of the grid sizes
    #[arg(long)]
    pub size: usize,
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Benchmark topics JSONL
    #[arg(long)]
    pub topics: PathBuf,
    /// Benchmark qrels
    #[arg(long)]
    pub qrels: PathBuf,
    /// Candidates CSV; labeled-true rows are verified leaks, all rows are excluded from fill
    #[arg(long)]
    pub candidates: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildGridArgs {
    /// `NAME,TOPICS,QRELS,CANDIDATES`; repeatable
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<ScenarioFiles>,
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Training sizes (default: the full grid)
    #[arg(long, value_delimiter = ',', default_values_t = GRID_SIZES)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// TREC run
    #[arg(long)]
    pub run: PathBuf,
    /// TREC qrels
    #[arg(long)]
    pub qrels: PathBuf,
    /// Metrics; repeatable
    #[arg(long = "metric", default_values_t = [Metric::NDCG10, Metric::P1, Metric::MFR])]
    pub metrics: Vec<Metric>,
    /// nDCG gain: exponential or linear
    #[arg(long, value_parser = parse_gain, default_value = "exponential")]
    pub gain: Gain,
}

#[derive(Debug, Args, Serialize)]
pub struct SigTestArgs {
    /// Baseline run as `[NAME=]PATH`
    #[arg(long)]
    pub baseline: NamedRun,
    /// System run as `[NAME=]PATH`; repeatable
    #[arg(long = "system", required = true)]
    pub systems: Vec<NamedRun>,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = Metric::NDCG10)]
    pub metric: Metric,
    #[arg(long, value_parser = parse_gain, default_value = "exponential")]
    pub gain: Gain,
    #[arg(long, default_value_t = leakaudit::eval::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Bonferroni factor (default: number of systems)
    #[arg(long)]
    pub hypotheses: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    /// CSV with columns condition,size,seed,topic_id,value
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Metric of the grid values; decides the selection direction
    #[arg(long, default_value_t = Metric::NDCG10)]
    pub metric: Metric,
}

#[derive(Debug, Args, Serialize)]
pub struct MemorizeArgs {
    /// Training set JSONL the leaky model was trained on
    #[arg(long)]
    pub training_set: PathBuf,
    /// Run of the model trained with leakage
    #[arg(long)]
    pub with_run: PathBuf,
    /// Run of the model trained without leakage
    #[arg(long)]
    pub without_run: PathBuf,
    /// Scores of leaked documents missing from --with-run
    #[arg(long)]
    pub with_rescore: Option<PathBuf>,
    /// Scores of leaked documents missing from --without-run
    #[arg(long)]
    pub without_rescore: Option<PathBuf>,
    /// Ranking depth; deeper documents get rank depth+1
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct KappaArgs {
    /// First annotator's labeled sheet
    #[arg(long)]
    pub a: PathBuf,
    /// Second annotator's labeled sheet
    #[arg(long)]
    pub b: PathBuf,
}
