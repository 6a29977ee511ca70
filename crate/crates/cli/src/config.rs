//! Pipeline configuration: one TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgqa_core::aflite::{AfliteConfig, ClassifierConfig};
use kgqa_core::distractor::{Strategy, StrategyConfig};
use kgqa_core::kg::UnmappedPolicy;
use kgqa_core::mr::TrainConfig;
use kgqa_core::qa::{GenConfig, SourceFamily};
use kgqa_core::scoring::ScoreMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Data files. Relative paths resolve against the directory of the config
/// file; unset resource paths fall back to the bundled defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub edges: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub names: Option<PathBuf>,
    /// Without a table the commonness filter is skipped.
    pub frequencies: Option<PathBuf>,
    /// A vector file (`.bin` reads the binary layout with a `.idx` sidecar)
    /// or `hashed:<dim>` for label-hashed vectors.
    pub embeddings: Option<String>,
    pub splits: Option<PathBuf>,
    /// Relation allowlist; CWWV defaults to the bundled list.
    pub relations: Option<PathBuf>,
    pub conversions: Option<PathBuf>,
    /// One sentence per line, used by the bigram scorer.
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub commonness_threshold: f64,
    /// CWWV only: share of triples sent to dev.
    pub dev_fraction: f64,
    /// ATOMIC only: triples whose head is missing from the split file.
    pub unmapped: UnmappedPolicy,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            commonness_threshold: 2.5,
            dev_fraction: 0.1,
            unmapped: UnmappedPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistractorSection {
    pub strategy: Strategy,
    pub k: usize,
    /// Defaults to 0.6 for CWWV and 0.4 for ATOMIC.
    pub sim_upper_bound: Option<f64>,
    pub pool_cap: Option<usize>,
}

impl Default for DistractorSection {
    fn default() -> Self {
        DistractorSection {
            strategy: Strategy::Random,
            k: 2,
            sim_upper_bound: None,
            pool_cap: Some(100),
        }
    }
}

/// Unset cutoffs follow the standard sizing rule of the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfliteSection {
    pub ensemble_size: usize,
    pub threshold: f64,
    pub cutoff_train: Option<usize>,
    pub cutoff_dev: Option<usize>,
    pub target_size: Option<usize>,
    pub warmup_fraction: f64,
    pub feature_dim: usize,
    pub classifier: ClassifierConfig,
}

impl Default for AfliteSection {
    fn default() -> Self {
        AfliteSection {
            ensemble_size: 64,
            threshold: 0.75,
            cutoff_train: None,
            cutoff_dev: None,
            target_size: None,
            warmup_fraction: 0.05,
            feature_dim: 32,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mr,
    Mlm,
}

impl std::str::FromStr for Regime {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mr" => Ok(Regime::Mr),
            "mlm" => Ok(Regime::Mlm),
            other => bail!("unknown regime `{other}` (expected mr or mlm)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub regime: Regime,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub eval_interval: usize,
    /// Defaults to 0.3 for CWWV and 0.5 for ATOMIC.
    pub mask_probability: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            regime: Regime::Mr,
            margin: t.margin,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            warmup_fraction: t.warmup_fraction,
            eval_interval: t.eval_interval,
            mask_probability: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub mode: ScoreMode,
    /// Add-alpha smoothing of the bigram scorer.
    pub alpha: f64,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection {
            mode: ScoreMode::Causal,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub family: SourceFamily,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub generate: GenerateSection,
    pub distractor: DistractorSection,
    pub aflite: AfliteSection,
    pub train: TrainSection,
    pub score: ScoreSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            family: SourceFamily::Cwwv,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            generate: GenerateSection::default(),
            distractor: DistractorSection::default(),
            aflite: AfliteSection::default(),
            train: TrainSection::default(),
            score: ScoreSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<Strategy>,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).context("invalid config")?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    /// The out dir given on the command line is taken as is, not relative
    /// to the config file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(s) = o.strategy {
            self.distractor.strategy = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = std::path::absolute(d).unwrap_or_else(|_| d.clone());
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Digest of the effective configuration as serialized (paths as
    /// written, so the hash does not depend on where the file lives).
    pub fn hash(&self) -> String {
        let mut shown = self.clone();
        shown.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&shown).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            family: self.family,
            commonness_threshold: self.generate.commonness_threshold,
            seed: self.seed,
        }
    }

    pub fn sim_upper_bound(&self) -> f64 {
        self.distractor.sim_upper_bound.unwrap_or(match self.family {
            SourceFamily::Cwwv => 0.6,
            SourceFamily::Atomic => 0.4,
        })
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            k: self.distractor.k,
            strategy: self.distractor.strategy,
            sim_upper_bound: self.sim_upper_bound(),
            pool_cap: self.distractor.pool_cap,
            seed: self.seed,
        }
    }

    pub fn aflite_config(&self, trn_len: usize, dev_len: usize) -> AfliteConfig {
        let std = AfliteConfig::standard(trn_len, dev_len, self.seed);
        let a = &self.aflite;
        AfliteConfig {
            ensemble_size: a.ensemble_size,
            threshold: a.threshold,
            cutoff_train: a.cutoff_train.unwrap_or(std.cutoff_train),
            cutoff_dev: a.cutoff_dev.unwrap_or(std.cutoff_dev),
            target_size: a.target_size.unwrap_or(std.target_size),
            seed: self.seed,
            classifier: a.classifier,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            margin: t.margin,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            warmup_fraction: t.warmup_fraction,
            eval_interval: t.eval_interval,
            seed,
        }
    }

    pub fn mask_probability(&self) -> f64 {
        self.train.mask_probability.unwrap_or(match self.family {
            SourceFamily::Cwwv => 0.3,
            SourceFamily::Atomic => 0.5,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let mut cfg = PipelineConfig::from_toml_str(
            "seed = 3\nfamily = \"atomic\"\n[distractor]\nstrategy = \"adv_answer\"\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.sim_upper_bound(), 0.4);
        assert_eq!(cfg.mask_probability(), 0.5);
        assert_eq!(cfg.strategy_config().strategy, Strategy::AdvAnswer);
        cfg.apply(&Overrides {
            seed: Some(9),
            strategy: Some(Strategy::Random),
            out_dir: None,
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.distractor.strategy, Strategy::Random);
        assert_eq!(cfg.resolve(Path::new("a.tsv")), PathBuf::from("/cfg/a.tsv"));
        assert_eq!(cfg.resolve(Path::new("/x/a.tsv")), PathBuf::from("/x/a.tsv"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("sed = 1\n", Path::new(".")).is_err());
        assert!(PipelineConfig::from_toml_str("[paths]\nedge = \"x\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn hash_ignores_location() {
        let a = PipelineConfig::from_toml_str("seed = 1\n", Path::new("/a")).unwrap();
        let b = PipelineConfig::from_toml_str("seed = 1\n", Path::new("/b")).unwrap();
        let c = PipelineConfig::from_toml_str("seed = 2\n", Path::new("/a")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn aflite_standard_sizing() {
        let cfg = PipelineConfig::default();
        let a = cfg.aflite_config(500, 100);
        assert_eq!((a.cutoff_train, a.cutoff_dev, a.target_size), (10, 2, 100));
    }
}
