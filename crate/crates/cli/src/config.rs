use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use sappkg::deep::DeepConfig;
use sappkg::kgbuild::{BinningOptions, Relation};
use sappkg::kge::{LossFamily, ModelKind, TrainConfig};
use sappkg::optim::OptimizerKind;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Run configuration, read from a TOML file. Relative paths resolve against
/// the directory holding the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// JSON-lines app corpus.
    pub corpus: PathBuf,
    /// Root of every generated artifact.
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    /// Reference date release ages are measured back from.
    pub snapshot_date: NaiveDate,
    /// Same-bin peers sampled per node and relation.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Base seed for graph sampling, splitting and training.
    pub seed: u64,
    /// Train / valid / test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub binning: BinningOptions,
    /// Cut-offs for deep recommendation metrics.
    #[serde(default = "default_rec_k")]
    pub rec_k: Vec<usize>,
    /// Cut-offs for relation prediction metrics.
    #[serde(default = "default_relation_k")]
    pub relation_k: Vec<usize>,
    /// Overrides applied to every shallow model.
    #[serde(default)]
    pub train: TrainOverrides,
    /// Per-kind overrides, keyed by model name; applied after `train`.
    #[serde(default)]
    pub model: BTreeMap<String, TrainOverrides>,
    /// Deep recommender settings. Its `seed` is replaced by the run seed.
    #[serde(default)]
    pub deep: DeepConfig,
    #[serde(default)]
    pub ablation: AblationSettings,
    #[serde(default)]
    pub bench: BenchSettings,
    /// List length of `recommend`.
    #[serde(default = "default_recommend_k")]
    pub recommend_k: usize,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("work")
}

fn default_k() -> usize {
    1
}

fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn default_rec_k() -> Vec<usize> {
    vec![10, 20, 30, 40]
}

fn default_relation_k() -> Vec<usize> {
    vec![1, 3, 5, 7]
}

fn default_recommend_k() -> usize {
    10
}

/// Optional [`TrainConfig`] fields; unset keys keep the per-kind default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub loss: Option<LossFamily>,
    pub margin: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub negatives_per_positive: Option<usize>,
    /// `sgd` or `adam`.
    pub optimizer: Option<String>,
    pub l2_weight: Option<f64>,
    pub dim: Option<usize>,
    pub relation_dim: Option<usize>,
    pub ntn_slices: Option<usize>,
    pub eval_every: Option<usize>,
    pub filter_negatives: Option<bool>,
}

impl TrainOverrides {
    fn apply(&self, config: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.loss {
            config.loss = v;
        }
        if let Some(v) = self.margin {
            config.margin = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.negatives_per_positive {
            config.negatives_per_positive = v;
        }
        if let Some(name) = &self.optimizer {
            config.optimizer = match name.to_ascii_lowercase().as_str() {
                "sgd" => OptimizerKind::Sgd,
                "adam" => OptimizerKind::adam(),
                other => return Err(CliError::Config(format!("unknown optimizer `{other}`"))),
            };
        }
        if let Some(v) = self.l2_weight {
            config.l2_weight = v;
        }
        if let Some(v) = self.dim {
            config.dims.dim = v;
            config.dims.relation_dim = self.relation_dim.unwrap_or(v);
        }
        if let Some(v) = self.relation_dim {
            config.dims.relation_dim = v;
        }
        if let Some(v) = self.ntn_slices {
            config.dims.ntn_slices = v;
        }
        if let Some(v) = self.eval_every {
            config.eval_every = v;
        }
        if let Some(v) = self.filter_negatives {
            config.filter_negatives = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    /// Shallow models retrained for each ablation.
    pub models: Vec<String>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            models: vec!["ComplEx".into(), "RotatE".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Shallow model names and/or `deep`.
    pub models: Vec<String>,
    /// Recommendation list length per timed query.
    pub k: usize,
    /// Upper bound on timed queries per model.
    pub max_queries: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            models: vec!["TransD".into(), "deep".into()],
            k: 10,
            max_queries: 100,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workdir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<RunConfig> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.corpus = base.join(&config.corpus);
        config.workdir = base.join(&config.workdir);
        Ok(config)
    }

    /// Read, apply overrides and validate.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        if !path.is_file() {
            return Err(CliError::missing("config file", path));
        }
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = RunConfig::from_toml(&text, base)?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(workdir) = &overrides.workdir {
            config.workdir = workdir.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.corpus.is_file() {
            return Err(CliError::missing("corpus", &self.corpus));
        }
        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.split.iter().any(|&r| !(r > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("split {:?} must be positive and sum to 1", self.split)));
        }
        for (name, list) in [("rec_k", &self.rec_k), ("relation_k", &self.relation_k)] {
            if list.is_empty() || list.contains(&0) {
                return Err(CliError::Config(format!("{name} needs positive cut-offs")));
            }
        }
        if self.recommend_k == 0 || self.bench.k == 0 || self.bench.max_queries == 0 {
            return Err(CliError::Config("recommend_k, bench.k and bench.max_queries must be positive".into()));
        }
        for name in self.model.keys().chain(&self.ablation.models) {
            parse_kind(name)?;
        }
        for name in &self.bench.models {
            if name != "deep" {
                parse_kind(name)?;
            }
        }
        for kind in ModelKind::ALL {
            self.train_config(kind)?.validate().map_err(|e| CliError::Config(format!("{kind}: {e}")))?;
        }
        self.deep_config().validate().map_err(|e| CliError::Config(format!("deep: {e}")))?;
        Ok(())
    }

    /// Per-kind defaults, then `[train]`, then `[model.<kind>]`.
    pub fn train_config(&self, kind: ModelKind) -> Result<TrainConfig> {
        let mut config = TrainConfig::for_kind(kind);
        self.train.apply(&mut config)?;
        for (name, overrides) in &self.model {
            if parse_kind(name)? == kind {
                overrides.apply(&mut config)?;
            }
        }
        config.seed = self.seed;
        Ok(config)
    }

    pub fn deep_config(&self) -> DeepConfig {
        DeepConfig {
            seed: self.seed,
            ..self.deep.clone()
        }
    }
}

pub fn parse_kind(name: &str) -> Result<ModelKind> {
    name.parse().map_err(|_| CliError::Usage(format!("unknown model kind `{name}`")))
}

/// Relation groups removed together in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationPlan {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl AblationPlan {
    pub const ALL: [AblationPlan; 4] = [AblationPlan::Exp1, AblationPlan::Exp2, AblationPlan::Exp3, AblationPlan::Exp4];

    pub fn relations(self) -> &'static [Relation] {
        use Relation::*;
        match self {
            AblationPlan::Exp1 => &[AdSimilar, EcSimilar, IapSimilar, VSimilar],
            AblationPlan::Exp2 => &[CrSimilar, GidSimilar],
            AblationPlan::Exp3 => &[RelSimilar, SSimilar],
            AblationPlan::Exp4 => &[RevSimilar, InsSimilar, StSimilar, RtgSimilar],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationPlan::Exp1 => "exp1",
            AblationPlan::Exp2 => "exp2",
            AblationPlan::Exp3 => "exp3",
            AblationPlan::Exp4 => "exp4",
        }
    }
}

impl fmt::Display for AblationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationPlan {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        AblationPlan::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CliError::Usage(format!("unknown ablation group `{s}` (expected exp1..exp4)")))
    }
}
