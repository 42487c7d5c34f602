//! The `bsc` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bsc_core::encoder::Checkpoint;
use bsc_core::eval::{self, EvalProtocol, MetricName};
use bsc_core::gradcheck;
use bsc_core::knn::FlatIndex;
use bsc_core::shuffle::shuffle;
use bsc_core::synth::{self, SynthConfig};
use bsc_core::train::{self, Executor};
use bsc_core::{EncoderModel, Metric, PairElement, PairRecord, ShuffleMode, Split};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{load_json, load_train_config, resolved_json};
use crate::dataset::{self, RawFormat, ScoreScale};
use crate::error::{CliError, Result};
use crate::fsutil;
use crate::parallel::Parallel;
use crate::report::{self, EvaluationOutput};
use crate::rundir::RunDir;

#[derive(Debug, Parser)]
#[command(
    name = "bsc",
    version,
    about = "Batch-softmax contrastive training toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed and write a run directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Reorder a dataset with one of the shuffle modes.
    Shuffle(ShuffleArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Nearest-neighbor lookups against a dataset's texts.
    Knn(KnnArgs),
    /// Generate the synthetic topic benchmark.
    Synth(SynthArgs),
    /// Convert raw scored pairs (JSONL or TSV) into a dataset.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads for encoding and search (0 = all cores).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Train only this seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dev metric used for epoch and seed selection.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "dev")]
    pub split: String,
    /// Report only this metric.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub protocol: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-group scores here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Reordered JSONL; group boundaries go to `<out>.groups.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder for the embedding-based modes; otherwise a fresh one seeded
    /// with the shuffle seed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Only shuffle records of this split.
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Query text; repeat for several.
    #[arg(long, required = true)]
    pub query: Vec<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Which side of each pair is indexed.
    #[arg(long, default_value = "first")]
    pub element: String,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Raw score range, `lo:hi` (e.g. `1:4`, `0:5`).
    #[arg(long)]
    pub scale: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = RawFormat::Jsonl)]
    pub format: RawFormat,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status: 0 ok, 1 invalid input, 2 failure while running.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Shuffle(a) => cmd_shuffle(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Knn(a) => cmd_knn(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Ingest(a) => cmd_ingest(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn emit_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    emit(out, &text)
}

fn parse_flag<T: std::str::FromStr<Err = bsc_core::Error>>(value: &str) -> Result<T> {
    Ok(value.parse()?)
}

/// `<path><suffix>` next to `path`, e.g. `data.jsonl.groups.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path, expected: Option<bsc_core::EncoderShape>) -> Result<Checkpoint> {
    let bytes = fsutil::read_bytes(path)?;
    Checkpoint::from_bytes(&bytes, expected)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<u8> {
    let mut cfg = load_train_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(m) = &a.metric {
        cfg.dev_metric = parse_flag(m)?;
    }
    if let Some(k) = a.k {
        cfg.metric_k = k;
    }
    cfg.validate()?;
    let records = dataset::read_dataset(&a.data)?;
    let train_split = dataset::split_of(&records, Split::Train);
    let dev = dataset::split_of(&records, Split::Dev);
    if train_split.is_empty() || dev.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: training needs train and dev records (found {} and {})",
            a.data.display(),
            train_split.len(),
            dev.len()
        )));
    }
    let exec = Parallel::new(a.threads.threads)?;
    let mut run_dir = RunDir::create(&a.out, &cfg)?;
    let search = match train::seed_search(&train_split, &dev, &cfg, &exec, &mut run_dir) {
        Ok(s) => s,
        Err(e) => return Err(run_dir.take_failure().unwrap_or(CliError::Core(e))),
    };
    if let Some(e) = run_dir.take_failure() {
        return Err(e);
    }
    let report = run_dir.finish(&cfg, &search)?;
    emit_json(out, &report)?;
    Ok(0)
}

pub struct Evaluation {
    pub ranking: eval::EvalReport,
    pub metrics: BTreeMap<String, f64>,
    /// Metric key to the reason it could not be computed.
    pub unavailable: BTreeMap<String, String>,
    /// F1 decision threshold and the split it was chosen on.
    pub f1_threshold: Option<(f64, String)>,
}

/// Computes every metric available on `records`; missing ones are listed
/// with the reason. The F1 threshold is chosen on `threshold_source` when
/// given and non-empty, otherwise on `records` themselves.
pub fn evaluate_records(
    model: &EncoderModel,
    records: &[PairRecord],
    threshold_source: Option<(&str, &[PairRecord])>,
    k: usize,
    protocol: EvalProtocol,
    threshold: f64,
    exec: &dyn Executor,
) -> Result<Evaluation> {
    let mut metrics = BTreeMap::new();
    let mut unavailable = BTreeMap::new();
    let ranking = match train::ranking_report(model, records, k, protocol, threshold, exec) {
        Ok(r) => {
            metrics.extend(r.metrics.iter().map(|(k, v)| (k.clone(), *v)));
            r
        }
        Err(
            e @ (bsc_core::Error::Domain(_)
            | bsc_core::Error::Degenerate(_)
            | bsc_core::Error::Contract(_)),
        ) => {
            for m in MetricName::ALL.into_iter().filter(|m| m.is_ranking()) {
                unavailable.insert(m.key(k), e.to_string());
            }
            eval::EvalReport::default()
        }
        Err(e) => return Err(e.into()),
    };

    let scores = train::pair_scores(model, records, exec)?;
    let gold: Vec<f64> = records.iter().map(|r| r.label).collect();
    match eval::spearman(&scores, &gold) {
        Ok(v) => {
            metrics.insert("spearman".into(), v);
        }
        Err(e) => {
            unavailable.insert("spearman".into(), e.to_string());
        }
    }

    let labels: Vec<bool> = gold.iter().map(|&y| y > threshold).collect();
    let (dev_scores, dev_labels, source) = match threshold_source {
        Some((name, dev)) if !dev.is_empty() => {
            let s = train::pair_scores(model, dev, exec)?;
            let l: Vec<bool> = dev.iter().map(|r| r.label > threshold).collect();
            (s, l, name.to_string())
        }
        _ => (scores.clone(), labels.clone(), "evaluated".to_string()),
    };
    let mut f1_threshold = None;
    match eval::f1_with_threshold(&dev_scores, &dev_labels, &scores, &labels) {
        Ok(t) => {
            metrics.insert("f1".into(), t.f1);
            f1_threshold = Some((t.threshold, source));
        }
        Err(e) => {
            unavailable.insert("f1".into(), e.to_string());
        }
    }
    Ok(Evaluation {
        ranking,
        metrics,
        unavailable,
        f1_threshold,
    })
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<u8> {
    let cfg = load_train_config(a.config.as_deref())?;
    let split: Split = parse_flag(&a.split)?;
    let k = a.k.unwrap_or(cfg.metric_k);
    if k == 0 {
        return Err(CliError::Validation("--k must be at least 1".into()));
    }
    let protocol: EvalProtocol = match &a.protocol {
        Some(p) => parse_flag(p)?,
        None => cfg.protocol,
    };
    let only: Option<MetricName> = a.metric.as_deref().map(parse_flag).transpose()?;
    let expected = a.config.as_ref().map(|_| cfg.encoder);
    let ckpt = load_checkpoint(&a.checkpoint, expected)?;
    let records = dataset::read_dataset(&a.data)?;
    let selected = dataset::split_of(&records, split);
    if selected.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no records in split {split}",
            a.data.display()
        )));
    }
    let dev = dataset::split_of(&records, Split::Dev);
    let source = (split != Split::Dev).then_some(("dev", dev.as_slice()));

    let exec = Parallel::new(a.threads.threads)?;
    let threshold = cfg.loss_config.threshold;
    let Evaluation {
        ranking,
        mut metrics,
        mut unavailable,
        f1_threshold: f1,
    } = evaluate_records(
        &ckpt.model,
        &selected,
        source,
        k,
        protocol,
        threshold,
        &exec,
    )?;
    if let Some(m) = only {
        let key = m.key(k);
        if let Some(why) = unavailable.get(&key) {
            return Err(CliError::Runtime(format!(
                "{key} cannot be computed: {why}"
            )));
        }
        metrics.retain(|name, _| *name == key);
        unavailable.clear();
    }

    let output = EvaluationOutput {
        config: resolved_json(&cfg),
        checkpoint: a.checkpoint.display().to_string(),
        data: a.data.display().to_string(),
        split: split.to_string(),
        protocol: protocol.to_string(),
        k,
        records: selected.len(),
        metrics,
        unavailable,
        groups_evaluated: ranking.groups_evaluated,
        groups_skipped: ranking.groups_skipped,
        f1_threshold: f1.as_ref().map(|t| t.0),
        f1_threshold_split: f1.map(|t| t.1),
    };
    let value = serde_json::to_value(&output).expect("report serializes");
    if let Some(p) = &a.out {
        fsutil::write_json(p, &value)?;
    }
    if let Some(p) = &a.csv {
        fsutil::write_atomic(p, report::groups_csv(&ranking.per_group, k).as_bytes())?;
    }
    if a.json {
        emit_json(out, &value)?;
    } else {
        emit(out, &report::table(&output))?;
    }
    Ok(0)
}

fn cmd_shuffle(a: ShuffleArgs, out: &mut dyn Write) -> Result<u8> {
    let run_cfg = load_train_config(a.config.as_deref())?;
    let mut cfg = run_cfg.shuffle.clone();
    if let Some(m) = &a.mode {
        cfg.mode = parse_flag::<ShuffleMode>(m)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let split: Option<Split> = a.split.as_deref().map(parse_flag).transpose()?;
    let mut records = dataset::read_dataset(&a.data)?;
    if let Some(s) = split {
        records.retain(|r| r.split == s);
    }
    if records.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no records to shuffle",
            a.data.display()
        )));
    }

    let embeddings = if cfg.mode.needs_embeddings() {
        let model = match &a.checkpoint {
            Some(p) => load_checkpoint(p, None)?.model,
            None => EncoderModel::init(run_cfg.encoder, cfg.seed)?,
        };
        let texts: Vec<&str> = records.iter().map(|r| r.text(cfg.element)).collect();
        Some(Parallel::new(a.threads.threads)?.encode(&model, &texts)?)
    } else {
        None
    };
    let seq = shuffle(&records, embeddings.as_ref(), &cfg)?;
    let ordered: Vec<PairRecord> = seq.order.iter().map(|&i| records[i].clone()).collect();
    let groups: Vec<Vec<&str>> = seq
        .groups()
        .map(|g| g.iter().map(|&i| records[i].id.as_str()).collect())
        .collect();

    let resolved = json!({
        "shuffle": resolved_json(&cfg),
        "encoder": resolved_json(&run_cfg.encoder),
        "checkpoint": a.checkpoint.as_ref().map(|p| p.display().to_string()),
        "split": split.map(|s| s.to_string()),
    });
    dataset::write_dataset(&a.out, &ordered)?;
    let groups_path = sidecar(&a.out, ".groups.json");
    fsutil::write_json(
        &groups_path,
        &json!({ "config": resolved, "records": ordered.len(), "groups": groups }),
    )?;
    emit_json(
        out,
        &json!({
            "config": resolved,
            "records": ordered.len(),
            "groups": seq.group_starts.len(),
            "out": a.out.display().to_string(),
            "groups_file": groups_path.display().to_string(),
        }),
    )?;
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<u8> {
    let results = gradcheck::run_suite(a.seed)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut text = String::new();
    for r in &results {
        text.push_str(&format!(
            "{:<width$}  {:.3e}  (tol {:.0e})  {}\n",
            r.name,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "ok" } else { "FAIL" }
        ));
    }
    text.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    emit(out, &text)?;
    if let Some(p) = &a.out {
        let checks: Vec<_> = results
            .iter()
            .map(|r| json!({ "name": r.name, "max_rel_error": r.max_rel_error, "tolerance": r.tolerance, "passed": r.passed }))
            .collect();
        fsutil::write_json(
            p,
            &json!({ "config": { "seed": a.seed }, "failed": failed, "checks": checks }),
        )?;
    }
    Ok(if failed == 0 { 0 } else { 2 })
}

fn cmd_knn(a: KnnArgs, out: &mut dyn Write) -> Result<u8> {
    let cfg = load_train_config(a.config.as_deref())?;
    let metric: Metric = parse_flag(&a.metric)?;
    let element = match a.element.as_str() {
        "first" => PairElement::First,
        "second" => PairElement::Second,
        other => {
            return Err(CliError::Validation(format!(
                "unknown element {other:?} (expected first or second)"
            )))
        }
    };
    if a.k == 0 {
        return Err(CliError::Validation("--k must be at least 1".into()));
    }
    let model = match &a.checkpoint {
        Some(p) => load_checkpoint(p, None)?.model,
        None => EncoderModel::init(cfg.encoder, 0)?,
    };
    let records = dataset::read_dataset(&a.data)?;
    if records.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: dataset is empty",
            a.data.display()
        )));
    }
    let exec = Parallel::new(a.threads.threads)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text(element)).collect();
    let index = FlatIndex::build_positional(exec.encode(&model, &texts)?, metric)?;
    let queries: Vec<&str> = a.query.iter().map(String::as_str).collect();
    let q = exec.encode(&model, &queries)?;
    let mut results = Vec::new();
    for (i, query) in a.query.iter().enumerate() {
        let hits = index.search_scored(q.row(i), a.k)?;
        let hits: Vec<_> = hits
            .iter()
            .enumerate()
            .map(|(rank, n)| {
                let r = &records[n.id as usize];
                json!({ "rank": rank + 1, "id": r.id, "score": n.score, "text": r.text(element) })
            })
            .collect();
        results.push(json!({ "query": query, "neighbors": hits }));
    }
    let resolved = json!({
        "encoder": resolved_json(&cfg.encoder),
        "checkpoint": a.checkpoint.as_ref().map(|p| p.display().to_string()),
        "metric": metric.name(),
        "element": a.element,
        "k": a.k,
    });
    emit_json(out, &json!({ "config": resolved, "results": results }))?;
    Ok(0)
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<u8> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let records = synth::generate(&cfg)?;
    dataset::write_dataset(&a.out, &records)?;
    let config_path = sidecar(&a.out, ".config.json");
    fsutil::write_json(&config_path, &resolved_json(&cfg))?;
    let count = |s: Split| records.iter().filter(|r| r.split == s).count();
    emit_json(
        out,
        &json!({
            "config": resolved_json(&cfg),
            "out": a.out.display().to_string(),
            "train": count(Split::Train),
            "dev": count(Split::Dev),
        }),
    )?;
    Ok(0)
}

fn cmd_ingest(a: IngestArgs, out: &mut dyn Write) -> Result<u8> {
    let scale: ScoreScale = a.scale.parse()?;
    let text = fsutil::read_to_string(&a.input)?;
    let records = dataset::ingest(&text, &a.input.display().to_string(), scale, a.format)?;
    dataset::write_dataset(&a.out, &records)?;
    let format = match a.format {
        RawFormat::Jsonl => "jsonl",
        RawFormat::Tsv => "tsv",
    };
    let resolved = json!({ "input": a.input.display().to_string(), "scale": { "lo": scale.lo, "hi": scale.hi }, "format": format });
    fsutil::write_json(&sidecar(&a.out, ".config.json"), &resolved)?;
    emit_json(
        out,
        &json!({ "config": resolved, "out": a.out.display().to_string(), "records": records.len() }),
    )?;
    Ok(0)
}
