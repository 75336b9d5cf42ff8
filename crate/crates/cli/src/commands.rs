use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sappkg::deep::{
    evaluate_recommendations, evaluate_relation_prediction, measure_inference, measure_shallow_inference,
    recommend_top_k, train_deep, DeepModel, RecReport, TimingReport,
};
use sappkg::ingest::{parse_app_records, validate_records, AppRecord, RecordFormat};
use sappkg::kgbuild::{
    apply_binning, build_triples, deserialize_kg_with_vocab, fit_binning_with, read_triples, serialize_kg,
    split_triples, write_triples, BinningOptions, EntityId, KnowledgeGraph, Relation, SplitSet, Triple,
};
use sappkg::kge::{
    evaluate_link_prediction, load_checkpoint, save_checkpoint, train_model, EvalReport, FilterSet, KgeModel,
    ModelKind, TrainConfig,
};
use sappkg::kgstats::{graph_statistics, relatedness_matrix, GraphStats};
use serde::{Deserialize, Serialize};

use crate::config::{parse_kind, AblationPlan, RunConfig};
use crate::error::{CliError, Result};

const MANIFEST_FORMAT: &str = "sappkg-kg/1";
const DEEP: &str = "deep";
/// Shallow model whose embeddings the deep recommender fuses.
pub const DEEP_SHALLOW: ModelKind = ModelKind::TransD;

/// File layout under the work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn kg(&self, file: &str) -> PathBuf {
        self.root.join("kg").join(file)
    }

    pub fn manifest(&self) -> PathBuf {
        self.kg("manifest.json")
    }

    pub fn stats(&self, file: &str) -> PathBuf {
        self.root.join("stats").join(file)
    }

    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.root.join("models").join(format!("{model}.ckpt"))
    }

    pub fn report(&self, file: &str) -> PathBuf {
        self.root.join("reports").join(file)
    }

    pub fn ablation(&self, plan: AblationPlan, file: &str) -> PathBuf {
        self.root.join("ablation").join(plan.name()).join(file)
    }
}

/// Build provenance written next to the triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub k: usize,
    pub split: [f64; 3],
    pub snapshot_date: NaiveDate,
    pub binning: BinningOptions,
    pub records: usize,
    pub malformed_lines: usize,
    pub rejected: usize,
    pub triples: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub relations: Vec<String>,
    pub entities: Vec<String>,
}

/// A built graph and its splits, read back from disk.
#[derive(Debug, Clone)]
pub struct Built {
    pub manifest: Manifest,
    pub kg: KnowledgeGraph,
    pub splits: SplitSet,
}

impl Built {
    pub fn train_graph(&self) -> Result<KnowledgeGraph> {
        Ok(self.kg.with_triples(self.splits.train.iter().copied())?)
    }

    fn filter(&self) -> FilterSet {
        FilterSet::new(self.kg.triples())
    }
}

/// Tab-separated table with a one-line header.
pub struct Tsv {
    text: String,
}

impl Tsv {
    pub fn new<S: AsRef<str>>(header: impl IntoIterator<Item = S>) -> Self {
        let mut t = Tsv { text: String::new() };
        t.row(header);
        t
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: impl IntoIterator<Item = S>) {
        let mut first = true;
        for f in fields {
            if !first {
                self.text.push('\t');
            }
            self.text.push_str(f.as_ref());
            first = false;
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.text.as_bytes())
    }
}

fn float(v: f64) -> String {
    format!("{v}")
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), float)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(what, path))
    }
}

fn write_graph(kg: &KnowledgeGraph, splits: &SplitSet, path: impl Fn(&str) -> PathBuf) -> Result<()> {
    let triples = path("triples.tsv");
    create_parent(&triples)?;
    serialize_kg(kg, &triples)?;
    for (name, part) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        write_triples(kg, part, path(&format!("{name}.tsv")))?;
    }
    Ok(())
}

/// Corpus to triples, splits and manifest.
pub fn build(config: &RunConfig, ws: &Workspace) -> Result<String> {
    let bytes = fs::read(&config.corpus).map_err(CliError::io(&config.corpus))?;
    let parsed = parse_app_records(&bytes, RecordFormat::JsonLines)?;
    for e in &parsed.errors {
        eprintln!("warning: {}:{}: {}", config.corpus.display(), e.line, e.message);
    }
    let validation = validate_records(&parsed.records);
    for r in &validation.rejected {
        eprintln!("warning: rejected `{}`: {}", r.app_id, r.reason);
    }
    let accepted: Vec<AppRecord> =
        parsed.records.iter().filter(|r| !validation.is_rejected(&r.app_id)).cloned().collect();
    let spec = fit_binning_with(&accepted, config.snapshot_date, config.binning)?;
    let features = accepted
        .iter()
        .map(|r| apply_binning(r, &spec))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let kg = build_triples(&features, config.k, config.seed)?;
    let splits = split_triples(&kg, config.split, config.seed)?;

    write_graph(&kg, &splits, |f| ws.kg(f))?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        seed: config.seed,
        k: config.k,
        split: config.split,
        snapshot_date: config.snapshot_date,
        binning: config.binning,
        records: parsed.records.len(),
        malformed_lines: parsed.errors.len(),
        rejected: validation.rejected.len(),
        triples: kg.triple_count(),
        train: splits.train.len(),
        valid: splits.valid.len(),
        test: splits.test.len(),
        relations: kg.relations().iter().map(|r| r.name().to_string()).collect(),
        entities: kg.entities().to_vec(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&ws.manifest(), json.as_bytes())?;

    Ok(format!(
        "entities\t{}\ntriples\t{}\ntrain\t{}\nvalid\t{}\ntest\t{}\n",
        kg.entity_count(),
        kg.triple_count(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len()
    ))
}

pub fn load_built(ws: &Workspace) -> Result<Built> {
    let manifest_path = ws.manifest();
    require(&manifest_path, "knowledge graph manifest (run `build` first)")?;
    let text = fs::read_to_string(&manifest_path).map_err(CliError::io(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(CliError::Config(format!("unsupported manifest format `{}`", manifest.format)));
    }
    let relations = manifest
        .relations
        .iter()
        .map(|r| r.parse::<Relation>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let files = ["triples.tsv", "train.tsv", "valid.tsv", "test.tsv"].map(|f| ws.kg(f));
    for f in &files {
        require(f, "knowledge graph file")?;
    }
    let kg = deserialize_kg_with_vocab(&files[0], manifest.entities.clone(), relations)?;
    let splits = SplitSet {
        train: read_triples(&kg, &files[1])?,
        valid: read_triples(&kg, &files[2])?,
        test: read_triples(&kg, &files[3])?,
        ratios: manifest.split,
        seed: manifest.seed,
    };
    Ok(Built { manifest, kg, splits })
}

/// Relatedness, support and whole-graph statistics.
pub fn stats(ws: &Workspace) -> Result<String> {
    let built = load_built(ws)?;
    let matrix = relatedness_matrix(&built.kg)?;
    let names: Vec<&str> = matrix.relations.iter().map(|r| r.name()).collect();
    for (file, values) in [("relatedness.tsv", &matrix.relatedness), ("support.tsv", &matrix.support)] {
        let mut t = Tsv::new(std::iter::once("relation").chain(names.iter().copied()));
        for (name, row) in names.iter().zip(values) {
            t.row(std::iter::once(name.to_string()).chain(row.iter().map(|&v| optional(v))));
        }
        t.write(&ws.stats(file))?;
    }
    let stats = graph_statistics(&built.kg);
    let rows = stats.rows();
    let mut t = Tsv::new(GraphStats::FIELDS);
    t.row(rows.iter().map(|(_, v)| v.clone()));
    t.write(&ws.stats("graph_stats.tsv"))?;
    Ok(stats_table(&rows, &names, &matrix.relatedness))
}

/// Aligned plain-text view of the statistics and the relatedness matrix.
fn stats_table(rows: &[(&str, String)], names: &[&str], relatedness: &[Vec<Option<f64>>]) -> String {
    let key_width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<key_width$}  {v}\n"));
    }
    let cell = names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
    out.push_str(&format!("\nrelatedness\n{:cell$}", ""));
    for n in names {
        out.push_str(&format!(" {n:>cell$}"));
    }
    out.push('\n');
    for (n, row) in names.iter().zip(relatedness) {
        out.push_str(&format!("{n:<cell$}"));
        for v in row {
            let text = v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"));
            out.push_str(&format!(" {text:>cell$}"));
        }
        out.push('\n');
    }
    out
}

/// `kind` field of a checkpoint header, read without loading the tensors.
pub fn checkpoint_kind(path: &Path) -> Result<String> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(CliError::io(path))?;
    let header: serde_json::Value = serde_json::from_str(line.trim_end())
        .map_err(|e| CliError::Usage(format!("{} is not a checkpoint: {e}", path.display())))?;
    header
        .get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("{} has no model kind", path.display())))
}

fn expect_kind(path: &Path, expected: &str) -> Result<()> {
    require(path, "checkpoint (run `train` first)")?;
    let found = checkpoint_kind(path)?;
    if !found.eq_ignore_ascii_case(expected) {
        return Err(CliError::Usage(format!(
            "{} holds a {found} model, expected {expected}",
            path.display()
        )));
    }
    Ok(())
}

fn check_shape(built: &Built, entities: usize, relations: usize, path: &Path) -> Result<()> {
    if entities != built.kg.entity_count() || relations != built.kg.relation_count() {
        return Err(CliError::Usage(format!(
            "{} was trained on {entities} entities / {relations} relations, graph has {} / {}",
            path.display(),
            built.kg.entity_count(),
            built.kg.relation_count()
        )));
    }
    Ok(())
}

pub fn load_shallow(built: &Built, ws: &Workspace, kind: ModelKind) -> Result<KgeModel> {
    let path = ws.checkpoint(kind.name());
    expect_kind(&path, kind.name())?;
    let (model, _) = load_checkpoint(&path)?;
    check_shape(built, model.entity_count, model.relation_count, &path)?;
    Ok(model)
}

pub fn load_deep(built: &Built, ws: &Workspace) -> Result<DeepModel> {
    let path = ws.checkpoint(DEEP);
    expect_kind(&path, DEEP)?;
    let model = DeepModel::load(&path)?;
    check_shape(built, model.entity_count(), model.relation_count(), &path)?;
    Ok(model)
}

fn train_history(history: &[sappkg::kge::EpochRecord]) -> Tsv {
    let mut t = Tsv::new(["epoch", "mean_loss", "valid_filtered_mrr"]);
    for e in history {
        t.row([e.epoch.to_string(), float(e.mean_loss), optional(e.valid_filtered_mrr)]);
    }
    t
}

fn eval_table(rows: &[(String, &EvalReport)]) -> Tsv {
    let mut t = Tsv::new(["model", "queries"].into_iter().chain(EvalReport::COLUMNS));
    for (name, r) in rows {
        t.row([name.clone(), r.queries.to_string()].into_iter().chain(r.values().map(float)));
    }
    t
}

fn rec_table(report: &RecReport) -> Tsv {
    let mut t = Tsv::new(RecReport::COLUMNS);
    for r in &report.rows {
        t.row([
            r.k.to_string(),
            float(r.precision),
            float(r.recall),
            float(r.map),
            float(r.map_n),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
        ]);
    }
    t
}

fn train_shallow_on(splits: &SplitSet, kg: &KnowledgeGraph, kind: ModelKind, config: &TrainConfig) -> Result<sappkg::kge::TrainOutcome> {
    Ok(train_model(splits, kg.entity_count(), kg.relation_count(), kind, config)?)
}

/// Train a shallow model or, for `deep`, the recommender on top of the TransD checkpoint.
pub fn train(config: &RunConfig, ws: &Workspace, model: &str) -> Result<String> {
    let built = load_built(ws)?;
    if model.eq_ignore_ascii_case(DEEP) {
        let shallow = load_shallow(&built, ws, DEEP_SHALLOW)?;
        let train_graph = built.train_graph()?;
        let outcome = train_deep(&train_graph, &built.splits, shallow, config.deep_config())?;
        let path = ws.checkpoint(DEEP);
        create_parent(&path)?;
        outcome.model.save(&path, &format!("{}.ckpt", DEEP_SHALLOW.name()))?;
        let mut t = Tsv::new(["epoch", "train_loss", "valid_loss"]);
        for e in &outcome.history {
            t.row([e.epoch.to_string(), float(e.train_loss), optional(e.valid_loss)]);
        }
        t.write(&ws.report("deep_train.tsv"))?;
        return Ok(format!("best_epoch\t{}\n", outcome.best_epoch));
    }
    let kind = parse_kind(model)?;
    let train_config = config.train_config(kind)?;
    let outcome = train_shallow_on(&built.splits, &built.kg, kind, &train_config)?;
    let path = ws.checkpoint(kind.name());
    create_parent(&path)?;
    save_checkpoint(&path, &outcome.model, config.seed, &train_config)?;
    train_history(&outcome.history).write(&ws.report(&format!("{}_train.tsv", kind.name())))?;
    Ok(format!(
        "best_epoch\t{}\nbest_valid_filtered_mrr\t{}\n",
        outcome.best_epoch,
        optional(outcome.best_valid_mrr)
    ))
}

fn partners(triples: &[Triple], anchor: EntityId) -> HashSet<EntityId> {
    triples
        .iter()
        .filter_map(|t| {
            if t.head == anchor {
                Some(t.tail)
            } else if t.tail == anchor {
                Some(t.head)
            } else {
                None
            }
        })
        .collect()
}

/// Link prediction on the test split, or recommendation and relation
/// prediction for `deep`.
pub fn eval(config: &RunConfig, ws: &Workspace, model: &str) -> Result<String> {
    let built = load_built(ws)?;
    if model.eq_ignore_ascii_case(DEEP) {
        let deep = load_deep(&built, ws)?;
        let train_graph = built.train_graph()?;
        let rec = evaluate_recommendations(&deep, &train_graph, &built.splits.train, &built.splits.test, &config.rec_k)?;
        let rec_tsv = rec_table(&rec);
        rec_tsv.write(&ws.report("deep_recommendation.tsv"))?;
        let rel = evaluate_relation_prediction(&deep.shallow, &built.kg, &built.splits.test, &config.relation_k)?;
        let rel_tsv = rec_table(&rel);
        rel_tsv.write(&ws.report("deep_relations.tsv"))?;
        return Ok(format!("{}\n{}", rec_tsv.as_str(), rel_tsv.as_str()));
    }
    let kind = parse_kind(model)?;
    let shallow = load_shallow(&built, ws, kind)?;
    let report = evaluate_link_prediction(&shallow, &built.splits.test, &built.filter())?;
    let t = eval_table(&[(kind.name().to_string(), &report)]);
    t.write(&ws.report(&format!("{}_eval.tsv", kind.name())))?;
    Ok(t.as_str().to_string())
}

/// The built graph and splits with `plan`'s relations removed. Relation ids
/// are re-densified, so facts are carried over by relation name.
pub fn ablate_graph(built: &Built, plan: AblationPlan) -> Result<(KnowledgeGraph, SplitSet)> {
    let ablated = built.kg.without_relations(plan.relations())?;
    let carry = |part: &[Triple]| -> Vec<Triple> {
        part.iter()
            .filter_map(|t| {
                let relation = ablated.relation_id(built.kg.relations()[t.relation])?;
                Some(Triple::new(t.head, relation, t.tail))
            })
            .collect()
    };
    let splits = SplitSet {
        train: carry(&built.splits.train),
        valid: carry(&built.splits.valid),
        test: carry(&built.splits.test),
        ..built.splits.clone()
    };
    Ok((ablated, splits))
}

/// Retrain the configured models without one relation group and compare.
pub fn ablate(config: &RunConfig, ws: &Workspace, group: &str) -> Result<String> {
    let plan: AblationPlan = group.parse()?;
    let built = load_built(ws)?;
    let (ablated, ablated_splits) = ablate_graph(&built, plan)?;
    if ablated_splits.test.is_empty() || ablated_splits.train.is_empty() {
        return Err(CliError::Usage(format!("removing {plan} leaves an empty split")));
    }
    write_graph(&ablated, &ablated_splits, |f| ws.ablation(plan, f))?;
    let ablated_filter = FilterSet::new(ablated.triples());

    let mut t = Tsv::new(["experiment", "model", "metric", "original", "ablated"]);
    for name in &config.ablation.models {
        let kind = parse_kind(name)?;
        let train_config = config.train_config(kind)?;
        let original = train_shallow_on(&built.splits, &built.kg, kind, &train_config)?;
        let original = evaluate_link_prediction(&original.model, &built.splits.test, &built.filter())?;
        let reduced = train_shallow_on(&ablated_splits, &ablated, kind, &train_config)?;
        let reduced = evaluate_link_prediction(&reduced.model, &ablated_splits.test, &ablated_filter)?;
        for ((metric, a), b) in EvalReport::COLUMNS.iter().zip(original.values()).zip(reduced.values()) {
            t.row([plan.name().to_string(), kind.name().to_string(), metric.to_string(), float(a), float(b)]);
        }
    }
    t.write(&ws.report(&format!("ablation_{}.tsv", plan.name())))?;
    Ok(t.as_str().to_string())
}

fn entity(built: &Built, app_id: &str) -> Result<EntityId> {
    built
        .kg
        .entity_id(app_id)
        .ok_or_else(|| CliError::Usage(format!("unknown app id `{app_id}`")))
}

/// Top apps for one anchor, skipping apps it is already linked to in train.
pub fn recommend(config: &RunConfig, ws: &Workspace, app_id: &str) -> Result<String> {
    let built = load_built(ws)?;
    let anchor = entity(&built, app_id)?;
    let deep = load_deep(&built, ws)?;
    let train_graph = built.train_graph()?;
    let exclusions = partners(&built.splits.train, anchor);
    let mut t = Tsv::new(["anchor", "rank", "app_id", "score"]);
    for (i, (e, score)) in recommend_top_k(&deep, &train_graph, anchor, config.recommend_k, &exclusions)
        .into_iter()
        .enumerate()
    {
        t.row([app_id.to_string(), (i + 1).to_string(), built.kg.entity_name(e).to_string(), float(score)]);
    }
    Ok(t.as_str().to_string())
}

/// Relations ranked by the TransD score of `(head, r, tail)`.
pub fn relations(config: &RunConfig, ws: &Workspace, head: &str, tail: &str) -> Result<String> {
    let built = load_built(ws)?;
    let (h, t_) = (entity(&built, head)?, entity(&built, tail)?);
    if h == t_ {
        return Err(CliError::Usage("head and tail must differ".into()));
    }
    let shallow = load_shallow(&built, ws, DEEP_SHALLOW)?;
    let k = config.relation_k.iter().copied().max().unwrap_or(1);
    let mut scored: Vec<(usize, f64)> = (0..shallow.relation_count).map(|r| (r, shallow.score(h, r, t_))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = Tsv::new(["rank", "relation", "score", "in_graph"]);
    for (i, (r, score)) in scored.into_iter().take(k).enumerate() {
        out.row([
            (i + 1).to_string(),
            built.kg.relations()[r].name().to_string(),
            float(score),
            built.kg.contains(&Triple::new(h, r, t_)).to_string(),
        ]);
    }
    Ok(out.as_str().to_string())
}

/// Per-query inference time of each configured model over test-split apps.
pub fn bench(config: &RunConfig, ws: &Workspace) -> Result<String> {
    let built = load_built(ws)?;
    let entities: Vec<EntityId> = built
        .splits
        .test
        .iter()
        .flat_map(|t| [t.head, t.tail])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .take(config.bench.max_queries)
        .collect();
    if entities.is_empty() {
        return Err(CliError::Usage("test split is empty; nothing to time".into()));
    }
    // load everything first so a missing checkpoint fails before any timing
    let mut models = Vec::new();
    for name in &config.bench.models {
        if name.eq_ignore_ascii_case(DEEP) {
            models.push((DEEP.to_string(), None, Some(load_deep(&built, ws)?)));
        } else {
            let kind = parse_kind(name)?;
            models.push((kind.name().to_string(), Some(load_shallow(&built, ws, kind)?), None));
        }
    }
    let train_graph = built.train_graph()?;
    let mut summary = Tsv::new(["model", "queries", "mean_ms"]);
    let mut times = Tsv::new(["model", "app_id", "ms"]);
    for (name, shallow, deep) in &models {
        let report: TimingReport = match (shallow, deep) {
            (Some(m), _) => measure_shallow_inference(m, &entities, config.bench.k)?,
            (_, Some(m)) => measure_inference(m, &train_graph, &entities, config.bench.k)?,
            _ => unreachable!("every bench entry holds one model"),
        };
        summary.row([name.clone(), report.times_ms.len().to_string(), float(report.mean_ms)]);
        for (&e, &ms) in entities.iter().zip(&report.times_ms) {
            times.row([name.clone(), built.kg.entity_name(e).to_string(), float(ms)]);
        }
    }
    summary.write(&ws.report("bench.tsv"))?;
    times.write(&ws.report("bench_times.tsv"))?;
    Ok(summary.as_str().to_string())
}
