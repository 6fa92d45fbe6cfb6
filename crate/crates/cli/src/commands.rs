use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use leakaudit::corpus_io::{
    self, parse_qrels, parse_queries, parse_rescore, parse_run, parse_sheet, parse_topics, parse_training_set,
    read_embeddings, sheet_to_csv, LeakageCandidate, QueryCollection, RescoreTable, TopicField,
};
use leakaudit::dataset_builder::{self, DatasetSpec, QueryPool, ScenarioInputs};
use leakaudit::embed_index::{normalize_rows, CosineIndex, SearchConfig};
use leakaudit::eval::{self, MetricResult};
use leakaudit::leakage_id::{self, SampleConfig};
use leakaudit::memorization::{self, Condition};
use leakaudit::seed::derive_seed;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;

/// Seed label shared by `build` and `build-grid`, so a single dataset can be
/// rebuilt with the grid's seed.
pub const DATASET_STAGE: &str = "datasets";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
}

impl From<leakaudit::Error> for Failure {
    fn from(e: leakaudit::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

/// What a subcommand produced; the caller writes files and the manifest.
#[derive(Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    /// Files to write into the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Files the subcommand already wrote, with their digests.
    pub written: BTreeMap<String, String>,
    /// Machine-readable result; also printed under `--format json`.
    pub report: Value,
    pub table: String,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report types serialize to JSON");
    out.push(b'\n');
    out
}

pub fn stage_seed(seed: u64, command: &Command) -> u64 {
    match command {
        Command::Build(_) | Command::BuildGrid(_) => derive_seed(seed, DATASET_STAGE),
        other => derive_seed(seed, other.name()),
    }
}

pub fn run(command: &Command, seed: u64, out: &Path) -> Result<Outcome> {
    let seed = stage_seed(seed, command);
    match command {
        Command::Candidates(a) => candidates(a),
        Command::SampleSheet(a) => sample_sheet(a, seed),
        Command::Calibrate(a) => calibrate(a),
        Command::Classify(a) => classify(a),
        Command::Report(a) => report(a),
        Command::Build(a) => build(a, seed),
        Command::BuildGrid(a) => build_grid(a, seed, out),
        Command::Eval(a) => evaluate(a),
        Command::SigTest(a) => sig_test(a),
        Command::Cv(a) => cv(a, seed),
        Command::Memorize(a) => memorize(a),
        Command::Kappa(a) => kappa(a),
    }
}

fn load_queries(files: &[QueryFile], inputs: &mut Vec<PathBuf>) -> Result<QueryCollection> {
    let mut all = QueryCollection::default();
    for f in files {
        all.extend(parse_queries(&f.path, f.format())?)?;
        inputs.push(f.path.clone());
    }
    Ok(all)
}

fn candidates(a: &CandidatesArgs) -> Result<Outcome> {
    if a.k == 0 {
        return Err(Failure::Invalid("leakage-id: --k must be at least 1".into()));
    }
    let queries = read_embeddings(&a.embeddings, &a.ids())?;
    let unit = normalize_rows(&queries)?;
    let mut config = SearchConfig::default();
    if let Some(b) = a.block_rows {
        config.block_rows = b;
    }
    let index = CosineIndex::with_config(&unit, config);
    let topics = parse_topics(&a.topics)?;
    let topic_rows = read_embeddings(&a.topic_embeddings, &a.topic_ids())?;
    log::info!("scanning {} queries for {} topic rows", unit.count(), topic_rows.count());
    let found = leakage_id::generate_candidates(&topics, &index, &topic_rows, a.k)?;
    let pairs = leakage_id::dedupe_pairs(&found).len();

    let report = json!({
        "queries": unit.count(),
        "topic_rows": topic_rows.count(),
        "k": a.k,
        "candidates": found.len(),
        "pairs": pairs,
    });
    Ok(Outcome {
        inputs: vec![a.embeddings.clone(), a.ids(), a.topics.clone(), a.topic_embeddings.clone(), a.topic_ids()],
        files: vec![("candidates.csv".into(), sheet_to_csv(&found))],
        table: format!(
            "{} candidates ({pairs} distinct pairs) from {} topic rows over {} queries\n",
            found.len(),
            topic_rows.count(),
            unit.count()
        ),
        report,
        ..Outcome::default()
    })
}

fn sample_sheet(a: &SampleSheetArgs, seed: u64) -> Result<Outcome> {
    let rows = parse_sheet(&a.candidates)?;
    let config = SampleConfig {
        floor: a.floor,
        n: a.n,
        bin_width: a.bin_width,
    };
    let sheet = leakage_id::stratified_sample(&rows, &config, seed)?;
    if sheet.insufficient {
        log::warn!("only {} pairs lie above {}; all were taken", sheet.rows.len(), a.floor);
    }
    let mut table = format!("{:>8} {:>8} {:>10} {:>8}\n", "lower", "upper", "population", "sampled");
    for b in &sheet.bins {
        let _ = writeln!(table, "{:>8.3} {:>8.3} {:>10} {:>8}", b.lower, b.upper, b.population, b.sampled);
    }
    let _ = writeln!(table, "{} pairs sampled", sheet.rows.len());
    Ok(Outcome {
        inputs: vec![a.candidates.clone()],
        files: vec![("labeling_sheet.csv".into(), sheet_to_csv(&sheet.rows))],
        report: json!({
            "sampled": sheet.rows.len(),
            "insufficient": sheet.insufficient,
            "bins": to_value(&sheet.bins),
        }),
        table,
        ..Outcome::default()
    })
}

fn calibrate(a: &CalibrateArgs) -> Result<Outcome> {
    let rows = parse_sheet(&a.sheet)?;
    let result = leakage_id::calibrate_from_sheet(&rows, a.target_precision)?;
    Ok(Outcome {
        inputs: vec![a.sheet.clone()],
        files: vec![("calibration.json".into(), pretty(&result))],
        table: format!(
            "threshold {:.6}: precision {:.4} over {} labeled pairs (target {})\n",
            result.threshold, result.achieved_precision, result.support, result.target_precision
        ),
        report: to_value(&result),
        ..Outcome::default()
    })
}

fn classify(a: &ClassifyArgs) -> Result<Outcome> {
    let mut inputs = vec![a.candidates.clone(), a.topics.clone()];
    let rows = parse_sheet(&a.candidates)?;
    let topics = parse_topics(&a.topics)?;
    let queries = load_queries(&a.queries, &mut inputs)?;
    let classified = leakage_id::classify_candidates(&rows, &topics, &queries, a.floor)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &classified {
        if let Some(r) = c.reformulation {
            *counts.entry(r.as_str()).or_default() += 1;
        }
    }
    let mut table = String::new();
    for (k, v) in &counts {
        let _ = writeln!(table, "{k:<16} {v:>8}");
    }
    Ok(Outcome {
        inputs,
        files: vec![("classified.csv".into(), sheet_to_csv(&classified))],
        report: json!({ "rows": classified.len(), "reformulations": counts }),
        table,
        ..Outcome::default()
    })
}

fn report(a: &ReportArgs) -> Result<Outcome> {
    let mut inputs = vec![a.candidates.clone()];
    let rows = parse_sheet(&a.candidates)?;
    let queries = if a.queries.is_empty() {
        None
    } else {
        Some(load_queries(&a.queries, &mut inputs)?)
    };
    if a.verified_only && rows.iter().all(|r| r.label.is_none()) {
        return Err(Failure::Invalid("leakage-id: --verified-only needs a labeled candidates file".into()));
    }
    let rep = leakage_id::leakage_report(&rows, a.theta, a.verified_only, queries.as_ref());
    let table = rep.to_table();
    Ok(Outcome {
        inputs,
        files: vec![("report.json".into(), pretty(&rep)), ("report.txt".into(), table.clone().into_bytes())],
        report: to_value(&rep),
        table,
        ..Outcome::default()
    })
}

fn load_pool(a: &PoolArgs, inputs: &mut Vec<PathBuf>) -> Result<QueryPool> {
    let queries = load_queries(&a.queries, inputs)?;
    let positives = parse_qrels(&a.train_qrels)?;
    let runs = parse_run(&a.bm25_run)?;
    inputs.extend([a.train_qrels.clone(), a.bm25_run.clone()]);
    let pool = QueryPool::new(&queries, &positives, &runs);
    if pool.skipped() > 0 {
        log::info!("{} training queries lack a positive or a negative and are skipped", pool.skipped());
    }
    Ok(pool)
}

struct ScenarioData {
    scenario: dataset_builder::Scenario,
    topics: corpus_io::TopicSet,
    qrels: corpus_io::Qrels,
    candidates: Vec<LeakageCandidate>,
    exclusions: BTreeSet<String>,
}

impl ScenarioData {
    fn load(f: &ScenarioFiles, inputs: &mut Vec<PathBuf>) -> Result<Self> {
        let candidates = parse_sheet(&f.candidates)?;
        inputs.extend([f.topics.clone(), f.qrels.clone(), f.candidates.clone()]);
        Ok(ScenarioData {
            scenario: f.scenario,
            topics: parse_topics(&f.topics)?,
            qrels: parse_qrels(&f.qrels)?,
            exclusions: candidates.iter().map(|c| c.query_id.clone()).collect(),
            candidates,
        })
    }

    fn inputs(&self) -> ScenarioInputs<'_> {
        ScenarioInputs {
            scenario: self.scenario,
            topics: &self.topics,
            qrels: &self.qrels,
            verified_leaks: &self.candidates,
            exclusions: &self.exclusions,
        }
    }
}

fn build(a: &BuildArgs, seed: u64) -> Result<Outcome> {
    let spec = DatasetSpec::new(a.scenario, a.kind, a.size, seed)?;
    let mut inputs = Vec::new();
    let pool = load_pool(&a.pool, &mut inputs)?;
    let files = ScenarioFiles {
        scenario: a.scenario,
        topics: a.topics.clone(),
        qrels: a.qrels.clone(),
        candidates: a.candidates.clone(),
    };
    let data = ScenarioData::load(&files, &mut inputs)?;
    let set = dataset_builder::build(&data.inputs(), &pool, &spec)?;
    let bytes = set.to_jsonl();
    let entry = dataset_builder::summarize(&spec, &set, &bytes);
    Ok(Outcome {
        inputs,
        table: format!(
            "{}: {} instances, {} leaked, fill {} MSM / {} ORCAS\n",
            entry.file, entry.instances, entry.leaked_instances, entry.fill_msm, entry.fill_orcas
        ),
        files: vec![(entry.file.clone(), bytes)],
        report: to_value(&entry),
        ..Outcome::default()
    })
}

fn build_grid(a: &BuildGridArgs, seed: u64, out: &Path) -> Result<Outcome> {
    let mut seen = BTreeSet::new();
    for s in &a.scenarios {
        if !seen.insert(s.scenario) {
            return Err(Failure::Usage(format!("scenario {} given twice", s.scenario)));
        }
    }
    if let Some(bad) = a.sizes.iter().find(|&&s| s == 0 || s % 2 == 1) {
        return Err(Failure::Invalid(format!("dataset-builder: size {bad} is not a positive even number")));
    }
    let mut inputs = Vec::new();
    let pool = load_pool(&a.pool, &mut inputs)?;
    let data = a
        .scenarios
        .iter()
        .map(|f| ScenarioData::load(f, &mut inputs))
        .collect::<Result<Vec<_>>>()?;
    let scenarios: Vec<ScenarioInputs<'_>> = data.iter().map(ScenarioData::inputs).collect();
    let manifest = dataset_builder::build_grid(&scenarios, &pool, &a.sizes, seed, out)?;

    let mut table = format!("{:<40} {:>10} {:>8} {:>8} {:>8}\n", "file", "instances", "leaked", "msm", "orcas");
    for e in &manifest.entries {
        let _ = writeln!(
            table,
            "{:<40} {:>10} {:>8} {:>8} {:>8}",
            e.file, e.instances, e.leaked_instances, e.fill_msm, e.fill_orcas
        );
    }
    Ok(Outcome {
        inputs,
        written: manifest.entries.iter().map(|e| (e.file.clone(), e.sha256.clone())).collect(),
        report: to_value(&manifest),
        table,
        ..Outcome::default()
    })
}

fn results_table(results: &[MetricResult]) -> String {
    let mut table = format!("{:<10} {:>10} {:>8} {:>9}\n", "metric", "mean", "topics", "excluded");
    for r in results {
        let _ = writeln!(
            table,
            "{:<10} {:>10.4} {:>8} {:>9}",
            r.metric.to_string(),
            r.mean,
            r.topics_evaluated,
            r.excluded.len()
        );
    }
    table
}

fn evaluate(a: &EvalArgs) -> Result<Outcome> {
    if a.metrics.is_empty() {
        return Err(Failure::Usage("at least one --metric is required".into()));
    }
    let run = parse_run(&a.run)?;
    let qrels = parse_qrels(&a.qrels)?;
    let results: Vec<MetricResult> = a.metrics.iter().map(|&m| eval::evaluate(&run, &qrels, m, a.gain)).collect();
    let summary: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "metric": r.metric,
                "mean": r.mean,
                "topics_evaluated": r.topics_evaluated,
                "excluded": r.excluded,
            })
        })
        .collect();
    Ok(Outcome {
        inputs: vec![a.run.clone(), a.qrels.clone()],
        files: vec![("scores.csv".into(), eval::score_table_csv(&results))],
        report: Value::Array(summary),
        table: results_table(&results),
        ..Outcome::default()
    })
}

fn sig_test(a: &SigTestArgs) -> Result<Outcome> {
    let qrels = parse_qrels(&a.qrels)?;
    let score = |r: &NamedRun| -> Result<MetricResult> {
        Ok(eval::evaluate(&parse_run(&r.path)?, &qrels, a.metric, a.gain))
    };
    let baseline = score(&a.baseline)?;
    let systems = a
        .systems
        .iter()
        .map(|s| Ok((s.name.clone(), score(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let rep = eval::compare_to_baseline(&a.baseline.name, &baseline, &systems, a.hypotheses, a.alpha)?;

    let mut table = format!(
        "{:<16} {:>10} {:>10} {:>8} {:>10} {:>10} {:>4}\n",
        "system", "mean", "baseline", "t", "p", "p_adj", "sig"
    );
    for t in &rep.tests {
        let _ = writeln!(
            table,
            "{:<16} {:>10.4} {:>10.4} {:>8.3} {:>10.3e} {:>10.3e} {:>4}",
            t.system,
            t.system_mean,
            t.baseline_mean,
            t.result.t_statistic,
            t.result.p_value,
            t.result.p_adjusted,
            if t.result.significant { "*" } else { "" }
        );
    }
    let mut inputs = vec![a.qrels.clone(), a.baseline.path.clone()];
    inputs.extend(a.systems.iter().map(|s| s.path.clone()));
    Ok(Outcome {
        inputs,
        files: vec![("significance.json".into(), pretty(&rep))],
        report: to_value(&rep),
        table,
        ..Outcome::default()
    })
}

fn cv(a: &CvArgs, seed: u64) -> Result<Outcome> {
    let file = std::fs::File::open(&a.grid).map_err(|e| Failure::Invalid(format!("corpus-io: {}: {e}", a.grid.display())))?;
    let grid = eval::read_grid_csv(std::io::BufReader::new(file))?;
    let rep = eval::cross_validate(&grid, a.folds, a.metric.lower_is_better(), seed)?;
    let mut table = format!("{:<24} {:>10}  selected sizes\n", "condition", "mean");
    for (name, c) in &rep.conditions {
        let sizes: Vec<String> = c.selections.iter().map(u64::to_string).collect();
        let _ = writeln!(table, "{name:<24} {:>10.4}  {}", c.mean, sizes.join(" "));
    }
    Ok(Outcome {
        inputs: vec![a.grid.clone()],
        files: vec![("cv.json".into(), pretty(&rep))],
        report: to_value(&rep),
        table,
        ..Outcome::default()
    })
}

fn memorize(a: &MemorizeArgs) -> Result<Outcome> {
    let mut inputs = vec![a.training_set.clone(), a.with_run.clone(), a.without_run.clone()];
    let set = parse_training_set(&a.training_set)?;
    let leaked = memorization::leaked_docs(&set);
    if leaked.is_empty() {
        return Err(Failure::Invalid("memorization: the training set has no leaked records".into()));
    }
    let with_run = parse_run(&a.with_run)?;
    let without_run = parse_run(&a.without_run)?;
    let mut rescore = |p: &Option<PathBuf>| -> Result<RescoreTable> {
        match p {
            Some(p) => {
                inputs.push(p.clone());
                Ok(parse_rescore(p)?)
            }
            None => Ok(RescoreTable::new()),
        }
    };
    let with_rescore = rescore(&a.with_rescore)?;
    let without_rescore = rescore(&a.without_rescore)?;
    let rep = memorization::analyze(
        Condition {
            run: &with_run,
            rescore: &with_rescore,
        },
        Condition {
            run: &without_run,
            rescore: &without_rescore,
        },
        &leaked,
        a.depth,
    )?;
    Ok(Outcome {
        inputs,
        files: vec![("memorization.json".into(), pretty(&rep))],
        table: rep.to_table(),
        report: json!({
            "depth": rep.depth,
            "leaked_docs": rep.leaked_docs,
            "mean_rank": rep.mean_rank,
            "mean_score": rep.mean_score,
            "rank_offset_delta": rep.rank_offset_delta,
        }),
        ..Outcome::default()
    })
}

type RowKey = (String, String, TopicField);

fn labels(path: &Path) -> Result<BTreeMap<RowKey, bool>> {
    let mut out = BTreeMap::new();
    for (i, r) in parse_sheet(path)?.into_iter().enumerate() {
        let label = r
            .label
            .ok_or_else(|| Failure::Invalid(format!("leakage-id: {} row {} is unlabeled", path.display(), i + 1)))?;
        out.insert((r.topic_id, r.query_id, r.field), label);
    }
    Ok(out)
}

fn kappa(a: &KappaArgs) -> Result<Outcome> {
    let la = labels(&a.a)?;
    let lb = labels(&a.b)?;
    if la.len() != lb.len() || la.keys().zip(lb.keys()).any(|(x, y)| x != y) {
        return Err(Failure::Invalid(
            "leakage-id: the two sheets must label the same (topic, query, field) rows".into(),
        ));
    }
    let va: Vec<bool> = la.values().copied().collect();
    let vb: Vec<bool> = lb.values().copied().collect();
    let k = leakage_id::cohen_kappa(&va, &vb)?;
    let agree = va.iter().zip(&vb).filter(|(x, y)| x == y).count();
    Ok(Outcome {
        inputs: vec![a.a.clone(), a.b.clone()],
        files: vec![(
            "kappa.json".into(),
            pretty(&json!({ "items": va.len(), "agreements": agree, "kappa": k })),
        )],
        report: json!({ "items": va.len(), "agreements": agree, "kappa": k }),
        table: format!("kappa {k:.4} over {} rows ({agree} agreements)\n", va.len()),
        ..Outcome::default()
    })
}
