//! The subcommands. Each reads its inputs, runs the core stages, writes
//! its outputs plus `report.json`, `report.txt` and `manifest.json` into
//! the output directory and returns the report.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use kgqa_core::aflite::{featurize_item, run_aflite, split_warmup, FeaturizedSample};
use kgqa_core::data;
use kgqa_core::distractor::{distract_items, PoolBuilder, QaItem};
use kgqa_core::embedding::{EmbeddingTable, HashedFeaturizer};
use kgqa_core::kg::{
    parse_edges, partition_atomic, partition_cwwv, read_relation_list, read_split_file, ColumnSpec, KnowledgeGraph,
    ParseOptions,
};
use kgqa_core::mr::{
    fit_mlm_bigram, masked_accuracy, mlm_eval_loss, select_mlm_masks, train_mr, LogLinearScorer, MlmMaskConfig,
};
use kgqa_core::qa::{generate_items, FrequencyTable, GenReport, GenResources, NamePool, SourceFamily, TemplateTable};
use kgqa_core::scoring::{
    evaluate, majority_baseline, sequence_for_item, BigramModel, ConversionTable, EvalItem, LmScorer, OptionScorer,
    Prediction, ScoreMode,
};
use kgqa_core::seed::SeedPath;
use kgqa_core::text::{tokenize, Stopwords};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{PipelineConfig, Regime};
use crate::io::{read_jsonl, read_jsonl_strict, write_json, write_jsonl, Manifest};
use crate::report::{AccuracyRow, DatasetStats, RunReport, StageCounts};

/// Eval and score abort when more than this share of lines is malformed.
pub const MAX_MALFORMED_SHARE: f64 = 0.10;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn prepare_out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn finish(dir: &Path, report: &RunReport, manifest: Manifest) -> Result<()> {
    report.write(dir)?;
    manifest.finish(dir)?;
    log::info!("wrote {}", dir.display());
    Ok(())
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    fn lap(&mut self, report: &mut RunReport, stage: &str) {
        report.timings.push((stage.into(), self.0.elapsed()));
        self.0 = Instant::now();
    }
}

/// Loads a configured file, or the bundled text when unset. The digest of
/// whichever bytes were used goes into the manifest.
fn resource<T>(
    cfg: &PipelineConfig,
    manifest: &mut Manifest,
    role: &str,
    path: Option<&Path>,
    bundled: &str,
    parse: impl Fn(&[u8]) -> kgqa_core::Result<T>,
) -> Result<T> {
    match path {
        Some(p) => {
            let p = cfg.resolve(p);
            let bytes = fs::read(&p).with_context(|| format!("reading {role} {}", p.display()))?;
            manifest.input_bytes(role, &bytes);
            parse(&bytes).with_context(|| format!("parsing {role} {}", p.display()))
        }
        None => {
            manifest.input_bytes(role, bundled.as_bytes());
            parse(bundled.as_bytes()).with_context(|| format!("parsing bundled {role}"))
        }
    }
}

fn stopwords(cfg: &PipelineConfig, m: &mut Manifest) -> Result<Stopwords> {
    resource(cfg, m, "stopwords", cfg.paths.stopwords.as_deref(), data::STOPWORDS_TXT, |b| Stopwords::read(b))
}

fn conversions(cfg: &PipelineConfig, m: &mut Manifest) -> Result<ConversionTable> {
    resource(
        cfg,
        m,
        "conversions",
        cfg.paths.conversions.as_deref(),
        data::CONVERSIONS_JSON,
        |b| ConversionTable::read_json(b),
    )
}

fn relation_allowlist(cfg: &PipelineConfig, m: &mut Manifest) -> Result<Option<BTreeSet<String>>> {
    match (&cfg.paths.relations, cfg.family) {
        (Some(p), _) => Ok(Some(resource(cfg, m, "relations", Some(p), "", |b| read_relation_list(b))?)),
        (None, SourceFamily::Cwwv) => Ok(Some(resource(cfg, m, "relations", None, data::RELATIONS_TXT, |b| read_relation_list(b))?)),
        (None, SourceFamily::Atomic) => Ok(None),
    }
}

fn load_graph(cfg: &PipelineConfig, m: &mut Manifest, report: &mut RunReport) -> Result<KnowledgeGraph> {
    let edges = cfg
        .paths
        .edges
        .as_deref()
        .ok_or_else(|| anyhow!("no edge file configured (paths.edges)"))?;
    let vocabulary = relation_allowlist(cfg, m)?;
    let path = cfg.resolve(edges);
    m.input_file("edges", &path)?;
    let opts = ParseOptions {
        columns: ColumnSpec::default(),
        vocabulary,
    };
    let (kg, pr) = parse_edges(open(&path)?, &opts).with_context(|| format!("parsing {}", path.display()))?;
    report.stages.push(
        StageCounts::new("ingest", pr.rows, pr.accepted)
            .drop("malformed", pr.malformed)
            .drop("out_of_vocabulary", pr.out_of_vocabulary),
    );
    Ok(kg)
}

/// Parses and normalizes an edge file; writes `graph.tsv`.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<RunReport> {
    let mut report = RunReport::new("ingest");
    let mut manifest = Manifest::new("ingest", cfg.seed, cfg.hash());
    let mut t = Timer::start();
    let kg = load_graph(cfg, &mut manifest, &mut report).context("ingest")?;
    t.lap(&mut report, "ingest");
    for (rel, n) in kg.relation_counts() {
        report.metrics.insert(format!("relation {rel}"), n as f64);
    }
    let dir = prepare_out_dir(cfg)?;
    let mut buf = Vec::new();
    kg.write_edges(&mut buf, &ColumnSpec::default())?;
    fs::write(dir.join("graph.tsv"), buf)?;
    finish(&dir, &report, manifest)?;
    Ok(report)
}

fn load_embeddings(cfg: &PipelineConfig, m: &mut Manifest, kg: &KnowledgeGraph) -> Result<Option<EmbeddingTable>> {
    let Some(spec) = cfg.paths.embeddings.as_deref() else {
        return Ok(None);
    };
    if let Some(dim) = spec.strip_prefix("hashed:") {
        let dim: usize = dim.parse().with_context(|| format!("bad embedding spec `{spec}`"))?;
        m.input_bytes("embeddings", spec.as_bytes());
        return Ok(Some(EmbeddingTable::hashed_for_graph(kg, dim)?));
    }
    let path = cfg.resolve(Path::new(spec));
    m.input_file("embeddings", &path)?;
    let table = if path.extension().is_some_and(|e| e == "bin") {
        let idx = path.with_extension("idx");
        m.input_file("embeddings_index", &idx)?;
        EmbeddingTable::read_binary(open(&path)?, open(&idx)?)?
    } else {
        EmbeddingTable::read_text(open(&path)?)?
    };
    Ok(Some(table))
}

/// Per-split drop counts of generation, keyed by reason name.
fn gen_stage(name: &str, r: &GenReport) -> StageCounts {
    r.dropped.iter().fold(StageCounts::new(name, r.input, r.emitted), |s, (reason, n)| {
        let key = serde_json::to_value(reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_else(|| format!("{reason:?}"));
        s.drop(key, *n)
    })
}

/// Runs ingestion, generation and distractor sampling; writes
/// `train.jsonl` and `dev.jsonl`.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<RunReport> {
    let strategy = cfg.strategy_config();
    strategy.validate().context("config")?;
    if strategy.strategy.is_adversarial() && cfg.paths.embeddings.is_none() {
        bail!(
            "config: strategy {} needs embeddings (set paths.embeddings to a vector file or `hashed:<dim>`)",
            strategy.strategy
        );
    }
    if cfg.family == SourceFamily::Atomic && cfg.paths.splits.is_none() {
        bail!("config: ATOMIC generation needs a split file (paths.splits)");
    }

    let mut report = RunReport::new("generate");
    let mut m = Manifest::new("generate", cfg.seed, cfg.hash());
    let mut t = Timer::start();

    let kg = load_graph(cfg, &mut m, &mut report).context("ingest")?;
    let res = GenResources {
        templates: resource(cfg, &mut m, "templates", cfg.paths.templates.as_deref(), data::TEMPLATES_JSON, |b| TemplateTable::read_json(b))
            .context("generate")?,
        names: resource(cfg, &mut m, "names", cfg.paths.names.as_deref(), data::NAMES_TXT, |b| NamePool::read(b))
            .context("generate")?,
        stopwords: stopwords(cfg, &mut m).context("generate")?,
        frequencies: match &cfg.paths.frequencies {
            Some(p) => Some(resource(cfg, &mut m, "frequencies", Some(p), "", |b| FrequencyTable::read(b)).context("generate")?),
            None => {
                log::info!("no frequency table configured; commonness filter skipped");
                None
            }
        },
    };
    let embeddings = load_embeddings(cfg, &mut m, &kg).context("distractor")?;
    t.lap(&mut report, "ingest");

    let (train, dev, held_out) = match cfg.family {
        SourceFamily::Cwwv => {
            let s = partition_cwwv(&kg, cfg.generate.dev_fraction, cfg.seed).context("partition")?;
            (s.train, s.dev, BTreeMap::new())
        }
        SourceFamily::Atomic => {
            let p = cfg.resolve(cfg.paths.splits.as_deref().expect("checked above"));
            m.input_file("splits", &p)?;
            let map = read_split_file(open(&p)?).context("partition")?;
            let s = partition_atomic(&kg, &map, cfg.generate.unmapped);
            let held = BTreeMap::from([("test".to_string(), s.test.len()), ("unmapped".to_string(), s.dropped)]);
            (s.train, s.dev, held)
        }
    };
    let mut part = StageCounts::new("partition", kg.len(), train.len() + dev.len());
    for (k, v) in held_out {
        part = part.drop(k, v);
    }
    report.stages.push(part);

    let gen_cfg = cfg.gen_config();
    let builder = PoolBuilder::new(&kg, &res.stopwords, &res.names);
    let mut outputs: Vec<(&str, Vec<QaItem>)> = Vec::new();
    for (name, partition) in [("train", &train), ("dev", &dev)] {
        let (partial, gr) = generate_items(partition, &kg, &res, &gen_cfg).with_context(|| format!("generate {name}"))?;
        report.stages.push(gen_stage(&format!("generate/{name}"), &gr));
        t.lap(&mut report, &format!("generate/{name}"));
        let (items, dr) =
            distract_items(&builder, &partial, &strategy, embeddings.as_ref()).with_context(|| format!("distractor {name}"))?;
        report.stages.push(
            StageCounts::new(format!("distractor/{name}"), dr.input, dr.emitted)
                .drop("insufficient_distractors", dr.insufficient_distractors),
        );
        t.lap(&mut report, &format!("distractor/{name}"));
        outputs.push((name, items));
    }

    let mut seen = HashSet::new();
    for (_, items) in &outputs {
        for it in items {
            ensure!(seen.insert(it.id.as_str()), "generate: duplicate item id {}", it.id);
        }
    }

    let dir = prepare_out_dir(cfg)?;
    for (name, items) in &outputs {
        write_jsonl(&dir.join(format!("{name}.jsonl")), items)?;
        report.metrics.insert(format!("items {name}"), items.len() as f64);
    }
    finish(&dir, &report, m)?;
    Ok(report)
}

/// Optional inputs of the filter: dense features (text vector format,
/// keyed by item id) and labels (`id<TAB>label`). Without them, features
/// are hashed from the item text and labels are the gold indices.
#[derive(Debug, Clone, Default)]
pub struct FilterInputs {
    pub input_dir: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

fn read_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected `id<TAB>label`", path.display(), n + 1))?;
        let label = label
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad label", path.display(), n + 1))?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

fn missing_list(ids: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(", ... ({} in total)", ids.len()));
    }
    s
}

fn featurize(
    items: &[QaItem],
    features: Option<&EmbeddingTable>,
    labels: Option<&HashMap<String, usize>>,
    hashed: &HashedFeaturizer,
) -> Result<Vec<FeaturizedSample>> {
    let mut missing_f = Vec::new();
    let mut missing_l = Vec::new();
    let mut out = Vec::with_capacity(items.len());
    for it in items {
        let feats = match features {
            Some(table) => match table.get(&it.id) {
                Some(v) => v.iter().map(|&x| f64::from(x)).collect(),
                None => {
                    missing_f.push(it.id.clone());
                    continue;
                }
            },
            None => featurize_item(&it.question, &it.options, hashed),
        };
        let label = match labels {
            Some(map) => match map.get(&it.id) {
                Some(&l) => l,
                None => {
                    missing_l.push(it.id.clone());
                    continue;
                }
            },
            None => it.answer_index,
        };
        out.push(FeaturizedSample {
            id: it.id.clone(),
            features: feats,
            label,
        });
    }
    ensure!(missing_f.is_empty(), "missing features for ids: {}", missing_list(&missing_f));
    ensure!(missing_l.is_empty(), "missing labels for ids: {}", missing_list(&missing_l));
    Ok(out)
}

fn keep_ids(items: &[QaItem], ids: &[String]) -> Vec<QaItem> {
    let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
    items.iter().filter(|it| keep.contains(it.id.as_str())).cloned().collect()
}

/// Adversarial filtering of a generated train/dev pair. Writes filtered
/// `train.jsonl`/`dev.jsonl`, the discarded warm-up share as
/// `warmup.jsonl` and one `audit.jsonl` line per iteration.
pub fn cmd_filter(cfg: &PipelineConfig, inputs: &FilterInputs) -> Result<RunReport> {
    let mut report = RunReport::new("filter");
    let mut m = Manifest::new("filter", cfg.seed, cfg.hash());
    let mut t = Timer::start();

    let train_path = inputs.input_dir.join("train.jsonl");
    let dev_path = inputs.input_dir.join("dev.jsonl");
    m.input_file("train", &train_path)?;
    let train: Vec<QaItem> = read_jsonl_strict(&train_path).context("filter")?;
    let dev: Vec<QaItem> = if dev_path.exists() {
        m.input_file("dev", &dev_path)?;
        read_jsonl_strict(&dev_path).context("filter")?
    } else {
        Vec::new()
    };
    let features = match &inputs.features {
        Some(p) => {
            m.input_file("features", p)?;
            Some(EmbeddingTable::read_text(open(p)?).context("filter: features")?)
        }
        None => None,
    };
    let labels = match &inputs.labels {
        Some(p) => {
            m.input_file("labels", p)?;
            Some(read_labels(p).context("filter: labels")?)
        }
        None => None,
    };
    let hashed = HashedFeaturizer::new(cfg.aflite.feature_dim).context("config")?;

    let n_train = train.len();
    let (warmup, train) = split_warmup(train, cfg.aflite.warmup_fraction, cfg.seed).context("filter")?;
    report
        .stages
        .push(StageCounts::new("warmup", n_train, train.len()).drop("warmup", warmup.len()));

    let trn = featurize(&train, features.as_ref(), labels.as_ref(), &hashed).context("filter")?;
    let dv = featurize(&dev, features.as_ref(), labels.as_ref(), &hashed).context("filter")?;
    let acfg = cfg.aflite_config(trn.len(), dv.len());
    acfg.validate().context("config")?;
    let result = run_aflite(&trn, &dv, &acfg).context("filter")?;
    t.lap(&mut report, "aflite");

    let train_out = keep_ids(&train, &result.trn_filtered);
    let dev_out = keep_ids(&dev, &result.dev_filtered);
    report.stages.push(
        StageCounts::new("aflite/train", train.len(), train_out.len()).drop("removed", train.len() - train_out.len()),
    );
    report
        .stages
        .push(StageCounts::new("aflite/dev", dev.len(), dev_out.len()).drop("removed", dev.len() - dev_out.len()));
    report.metrics.insert("iterations".into(), result.audit_log.len() as f64);
    for (k, v) in [
        ("ensemble_size", acfg.ensemble_size as f64),
        ("threshold", acfg.threshold),
        ("cutoff_train", acfg.cutoff_train as f64),
        ("cutoff_dev", acfg.cutoff_dev as f64),
        ("target_size", acfg.target_size as f64),
    ] {
        report.metrics.insert(k.into(), v);
    }

    let dir = prepare_out_dir(cfg)?;
    write_jsonl(&dir.join("train.jsonl"), &train_out)?;
    write_jsonl(&dir.join("dev.jsonl"), &dev_out)?;
    write_jsonl(&dir.join("warmup.jsonl"), &warmup)?;
    write_jsonl(&dir.join("audit.jsonl"), &result.audit_log)?;
    finish(&dir, &report, m)?;
    Ok(report)
}

/// Which model answers the questions.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    /// Always the most frequent gold index of the file.
    Majority,
    /// Bigram model over a corpus (`paths.corpus` when `None`).
    Bigram(Option<PathBuf>),
    /// A trained log-linear checkpoint.
    Checkpoint(PathBuf),
}

impl FromStr for ScorerSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "majority" => Ok(ScorerSpec::Majority),
            None if s == "bigram" => Ok(ScorerSpec::Bigram(None)),
            Some(("bigram", p)) => Ok(ScorerSpec::Bigram(Some(p.into()))),
            Some(("checkpoint", p)) => Ok(ScorerSpec::Checkpoint(p.into())),
            _ => bail!("unknown scorer `{s}` (majority, bigram[:corpus], checkpoint:<file>)"),
        }
    }
}

impl ScorerSpec {
    fn name(&self) -> &'static str {
        match self {
            ScorerSpec::Majority => "majority",
            ScorerSpec::Bigram(_) => "bigram",
            ScorerSpec::Checkpoint(_) => "checkpoint",
        }
    }
}

/// Weights plus the training settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub best_step: usize,
    pub best_dev_accuracy: Option<f64>,
    pub config: kgqa_core::mr::TrainConfig,
    pub scorer: LogLinearScorer,
}

enum Loaded {
    Majority,
    Bigram(BigramModel, ConversionTable),
    Checkpoint(LogLinearScorer),
}

fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect())
}

fn load_scorer(cfg: &PipelineConfig, spec: &ScorerSpec, m: &mut Manifest) -> Result<Loaded> {
    Ok(match spec {
        ScorerSpec::Majority => Loaded::Majority,
        ScorerSpec::Bigram(p) => {
            let path = match p {
                Some(p) => p.clone(),
                None => cfg
                    .resolve(cfg.paths.corpus.as_deref().ok_or_else(|| anyhow!("bigram scorer needs a corpus"))?),
            };
            m.input_file("corpus", &path)?;
            let model = BigramModel::from_texts(read_corpus(&path)?, cfg.score.alpha)?;
            Loaded::Bigram(model, conversions(cfg, m)?)
        }
        ScorerSpec::Checkpoint(p) => {
            m.input_file("checkpoint", p)?;
            let ck: Checkpoint = serde_json::from_reader(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            ensure!(ck.scorer.is_finite(), "checkpoint {} has non-finite weights", p.display());
            Loaded::Checkpoint(ck.scorer)
        }
    })
}

fn predict(loaded: &Loaded, mode: ScoreMode, items: &[EvalItem]) -> Result<(Option<f64>, Vec<Prediction>)> {
    let scorer: &dyn OptionScorer = match loaded {
        Loaded::Majority => {
            let majority = majority_index(items);
            let preds = items
                .iter()
                .map(|it| Prediction {
                    id: it.id.clone(),
                    predicted_index: majority,
                    scores: Vec::new(),
                })
                .collect();
            return Ok((Some(majority_baseline(items)), preds));
        }
        Loaded::Bigram(model, conv) => &LmScorer {
            model,
            conversions: conv,
            mode,
        },
        Loaded::Checkpoint(s) => s,
    };
    if items.is_empty() {
        return Ok((None, Vec::new()));
    }
    let ev = evaluate(items, scorer)?;
    Ok((Some(ev.accuracy), ev.predictions))
}

/// Most frequent gold index, smallest index on ties.
fn majority_index(items: &[EvalItem]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for it in items {
        *counts.entry(it.answer_index).or_default() += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(0, |(&k, _)| k)
}

/// Reads an eval file, treating items with fewer than two options or an
/// out-of-range gold index as malformed. Fails above the malformed cap.
fn read_eval_file(path: &Path) -> Result<(Vec<EvalItem>, usize)> {
    let r = read_jsonl::<EvalItem>(path)?;
    let lines = r.lines();
    let mut malformed = r.malformed.len();
    let items: Vec<EvalItem> = r
        .items
        .into_iter()
        .filter(|it| {
            let ok = it.options.len() >= 2 && it.answer_index < it.options.len();
            if !ok {
                log::warn!("{}: skipping invalid item {}", path.display(), it.id);
                malformed += 1;
            }
            ok
        })
        .collect();
    let share = if lines == 0 { 0.0 } else { malformed as f64 / lines as f64 };
    ensure!(
        share <= MAX_MALFORMED_SHARE,
        "{}: {malformed} of {lines} lines malformed (limit {:.0}%)",
        path.display(),
        MAX_MALFORMED_SHARE * 100.0
    );
    Ok((items, malformed))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn mode_name(mode: ScoreMode) -> &'static str {
    match mode {
        ScoreMode::Causal => "causal",
        ScoreMode::Masked => "masked",
    }
}

/// Scores one file and writes `predictions.jsonl`.
pub fn cmd_score(cfg: &PipelineConfig, input: &Path, spec: &ScorerSpec) -> Result<RunReport> {
    let mut report = RunReport::new("score");
    let mut m = Manifest::new("score", cfg.seed, cfg.hash());
    let mut t = Timer::start();
    let loaded = load_scorer(cfg, spec, &mut m).context("score")?;
    m.input_file("input", input)?;
    let (items, malformed) = read_eval_file(input).context("score")?;
    let (accuracy, preds) = predict(&loaded, cfg.score.mode, &items).context("score")?;
    t.lap(&mut report, "score");
    report.accuracy.push(AccuracyRow {
        dataset: dataset_name(input),
        scorer: spec.name().into(),
        mode: mode_name(cfg.score.mode).into(),
        items: items.len(),
        malformed,
        accuracy,
        majority: majority_baseline(&items),
    });
    let dir = prepare_out_dir(cfg)?;
    write_jsonl(&dir.join("predictions.jsonl"), &preds)?;
    finish(&dir, &report, m)?;
    Ok(report)
}

/// Accuracy per file next to the majority baseline.
pub fn cmd_eval(cfg: &PipelineConfig, inputs: &[PathBuf], spec: &ScorerSpec) -> Result<RunReport> {
    ensure!(!inputs.is_empty(), "eval: no input files");
    let mut report = RunReport::new("eval");
    let mut m = Manifest::new("eval", cfg.seed, cfg.hash());
    let mut t = Timer::start();
    let loaded = load_scorer(cfg, spec, &mut m).context("eval")?;
    for path in inputs {
        let name = dataset_name(path);
        m.input_file(&format!("eval {name}"), path)?;
        let (items, malformed) = read_eval_file(path).context("eval")?;
        let (accuracy, _) = predict(&loaded, cfg.score.mode, &items).with_context(|| format!("eval {name}"))?;
        report.accuracy.push(AccuracyRow {
            dataset: name.clone(),
            scorer: spec.name().into(),
            mode: mode_name(cfg.score.mode).into(),
            items: items.len(),
            malformed,
            accuracy,
            majority: majority_baseline(&items),
        });
        t.lap(&mut report, &name);
    }
    let dir = prepare_out_dir(cfg)?;
    finish(&dir, &report, m)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainInputs {
    pub train: PathBuf,
    pub dev: PathBuf,
}

/// Mean and half-width of the two-sided 95% Student-t interval.
pub fn mean_ci95(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.975);
    Some((mean, t * (var / n as f64).sqrt()))
}

fn eval_items(path: &Path) -> Result<Vec<EvalItem>> {
    let (items, _) = read_eval_file(path)?;
    Ok(items)
}

/// Trains under the configured regime once per seed. Writes one
/// sub-directory per seed when sweeping.
pub fn cmd_train(cfg: &PipelineConfig, inputs: &TrainInputs, seeds: &[u64]) -> Result<RunReport> {
    let seeds: Vec<u64> = if seeds.is_empty() { vec![cfg.seed] } else { seeds.to_vec() };
    let mut report = RunReport::new("train");
    let mut m = Manifest::new("train", cfg.seed, cfg.hash());
    let mut t = Timer::start();
    m.input_file("train", &inputs.train)?;
    m.input_file("dev", &inputs.dev)?;
    let train = eval_items(&inputs.train).context("train")?;
    let dev = eval_items(&inputs.dev).context("train")?;
    let dir = prepare_out_dir(cfg)?;
    let sweep = seeds.len() > 1;
    let majority = majority_baseline(&dev);
    let mut accs = Vec::new();

    let (stopwords, base) = match cfg.train.regime {
        Regime::Mlm => {
            let sw = stopwords(cfg, &mut m)?;
            let base = match &cfg.paths.corpus {
                Some(p) => {
                    let p = cfg.resolve(p);
                    m.input_file("corpus", &p)?;
                    read_corpus(&p)?.iter().map(|l| tokenize(l)).collect()
                }
                None => Vec::new(),
            };
            (Some(sw), base)
        }
        Regime::Mr => (None, Vec::new()),
    };

    for &seed in &seeds {
        let seed_dir = if sweep { dir.join(format!("seed-{seed}")) } else { dir.clone() };
        fs::create_dir_all(&seed_dir)?;
        match cfg.train.regime {
            Regime::Mr => {
                let tc = cfg.train_config(seed);
                let out = train_mr(&train, &dev, LogLinearScorer::new(), &tc).with_context(|| format!("train seed {seed}"))?;
                let mut csv = String::from("step,loss,dev_accuracy\n");
                for row in &out.history {
                    let acc = row.dev_accuracy.map_or(String::new(), |a| a.to_string());
                    csv.push_str(&format!("{},{},{}\n", row.step, row.loss, acc));
                }
                fs::write(seed_dir.join("history.csv"), csv)?;
                write_json(
                    &seed_dir.join("checkpoint.json"),
                    &Checkpoint {
                        seed,
                        best_step: out.best_step,
                        best_dev_accuracy: out.best_dev_accuracy,
                        config: tc,
                        scorer: out.scorer,
                    },
                )?;
                if let Some(a) = out.best_dev_accuracy {
                    accs.push(a);
                }
                report.accuracy.push(AccuracyRow {
                    dataset: dataset_name(&inputs.dev),
                    scorer: format!("mr seed {seed}"),
                    mode: "-".into(),
                    items: dev.len(),
                    malformed: 0,
                    accuracy: out.best_dev_accuracy,
                    majority,
                });
            }
            Regime::Mlm => {
                let sw = stopwords.as_ref().expect("loaded for mlm");
                let model = fit_mlm_bigram(&base, &train, cfg.score.alpha).context("train")?;
                let mask_cfg = MlmMaskConfig::new(cfg.mask_probability()).context("config")?;
                let masked: Vec<_> = dev
                    .iter()
                    .map(|it| {
                        let seq = sequence_for_item(&it.question, &it.options[it.answer_index], "")?;
                        let mut rng = SeedPath::new(seed).with("mlm-mask").with(&it.id).rng();
                        let masks = select_mlm_masks(&seq, &mask_cfg, sw, &mut rng);
                        Ok((seq, masks))
                    })
                    .collect::<kgqa_core::Result<_>>()
                    .context("train")?;
                let loss = mlm_eval_loss(&model, &masked);
                let acc = masked_accuracy(&model, &dev).context("train")?;
                write_json(
                    &seed_dir.join("mlm.json"),
                    &serde_json::json!({
                        "seed": seed,
                        "mask_probability": mask_cfg.mask_probability,
                        "dev_masked_loss": loss,
                        "dev_accuracy": acc,
                    }),
                )?;
                if let Some(l) = loss {
                    report.metrics.insert(format!("masked loss seed {seed}"), l);
                }
                accs.push(acc);
                report.accuracy.push(AccuracyRow {
                    dataset: dataset_name(&inputs.dev),
                    scorer: format!("mlm seed {seed}"),
                    mode: "masked".into(),
                    items: dev.len(),
                    malformed: 0,
                    accuracy: if dev.is_empty() { None } else { Some(acc) },
                    majority,
                });
            }
        }
        t.lap(&mut report, &format!("seed {seed}"));
    }
    if let Some((mean, half)) = mean_ci95(&accs) {
        report.metrics.insert("dev accuracy mean".into(), mean);
        report.metrics.insert("dev accuracy ci95".into(), half);
    }
    finish(&dir, &report, m)?;
    Ok(report)
}

#[derive(Debug, Clone, Deserialize)]
struct StatsItem {
    question: String,
    options: Vec<String>,
    #[serde(default)]
    relation: Option<String>,
}

/// Item counts, option-count histogram, relation distribution and mean
/// question length per file. Unparsable lines are counted, not fatal.
pub fn cmd_stats(cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<RunReport> {
    let mut report = RunReport::new("stats");
    let mut m = Manifest::new("stats", cfg.seed, cfg.hash());
    for path in inputs {
        let name = dataset_name(path);
        m.input_file(&format!("stats {name}"), path)?;
        let r = read_jsonl::<StatsItem>(path).context("stats")?;
        let mut d = DatasetStats {
            dataset: name,
            items: r.items.len(),
            malformed: r.malformed.len(),
            ..Default::default()
        };
        let mut q_tokens = 0usize;
        for it in &r.items {
            *d.option_histogram.entry(it.options.len()).or_default() += 1;
            *d.relations
                .entry(it.relation.clone().unwrap_or_else(|| "-".into()))
                .or_default() += 1;
            q_tokens += tokenize(&it.question).len();
        }
        if !r.items.is_empty() {
            d.mean_question_tokens = q_tokens as f64 / r.items.len() as f64;
        }
        report.stages.push(
            StageCounts::new(format!("read/{}", d.dataset), r.lines(), d.items).drop("malformed", d.malformed),
        );
        report.datasets.push(d);
    }
    let dir = prepare_out_dir(cfg)?;
    finish(&dir, &report, m)?;
    Ok(report)
}
