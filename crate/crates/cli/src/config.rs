use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use mltm::corpus::LexiconMode;
use mltm::sampler::{Hyperparameters, ModelKind};
use serde::{Deserialize, Serialize};

use crate::Usage;

/// Experiment settings. Every field can come from the config file or a
/// flag of the same name; flags win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigArgs {
    /// lda, doclink, cbilda, softlink or voclink
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// Training corpus of the first language (JSON Lines)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side1: Option<PathBuf>,
    /// Training corpus of the second language; defaults to `side1`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side2: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lang1: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lang2: Option<String>,
    /// Bilingual lexicon, `word1<TAB>word2` per line
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    /// Parallel reference corpus for coherence
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Labeled held-out documents of the first language (classifier training)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test1: Option<PathBuf>,
    /// Labeled held-out documents of the second language (classifier test)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test2: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stoplist: Option<PathBuf>,
    /// Comma-separated label universe
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_double_prime: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_sweeps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infer_sweeps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    /// Fraction of document links kept
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_proportion: Option<f64>,
    /// Fraction of lexicon entries kept
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon_proportion: Option<f64>,
    /// random or frequency
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon_mode: Option<LexiconMode>,
    /// Number of most frequent word types removed from each training corpus
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_cutoff: Option<usize>,
    /// Top words per topic for coherence and alignment
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_words: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity_fraction: Option<f64>,
    /// Cross-validation folds of the classifier
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    /// Print `sweep, model, chain, elapsed-ms` to stderr after every sweep
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<bool>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    /// Fields set in `over` replace those of `self`.
    pub fn merged(&self, over: &ConfigArgs) -> Result<ConfigArgs> {
        let mut base = serde_json::to_value(self)?;
        let top = serde_json::to_value(over)?;
        if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
            for (k, v) in t {
                b.insert(k.clone(), v.clone());
            }
        }
        Ok(serde_json::from_value(base)?)
    }

    pub fn load(path: &Path) -> Result<ConfigArgs> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Usage(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn hyper(&self) -> Result<Hyperparameters> {
        let d = Hyperparameters::default();
        let h = Hyperparameters {
            topics: self.topics.unwrap_or(d.topics),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            beta_prime: self.beta_prime.unwrap_or(d.beta_prime),
            beta_double_prime: self.beta_double_prime.unwrap_or(d.beta_double_prime),
            chi: self.chi.unwrap_or(d.chi),
            focus_threshold: self.focus_threshold.unwrap_or(d.focus_threshold),
            train_sweeps: self.train_sweeps.unwrap_or(d.train_sweeps),
            infer_sweeps: self.infer_sweeps.unwrap_or(d.infer_sweeps),
            chains: self.chains.unwrap_or(d.chains),
            seed: self.seed(),
        };
        h.validate().map_err(|e| Usage(e.to_string()))?;
        if h.chains == 0 {
            return Err(Usage("chains must be at least 1".into()).into());
        }
        Ok(h)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn model(&self) -> Result<ModelKind> {
        self.model.ok_or_else(|| Usage("missing field `model`".into()).into())
    }

    pub fn langs(&self) -> Result<[String; 2]> {
        Ok([
            self.lang1.clone().ok_or_else(|| Usage("missing field `lang1`".into()))?,
            self.lang2.clone().ok_or_else(|| Usage("missing field `lang2`".into()))?,
        ])
    }

    pub fn top_words(&self) -> usize {
        self.top_words.unwrap_or(mltm::eval::DEFAULT_TOP_WORDS)
    }

    pub fn label_universe(&self) -> Vec<String> {
        match &self.labels {
            Some(s) => s.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
            None => mltm::classify::default_universe(),
        }
    }

    pub fn proportion(&self, name: &str, value: Option<f64>) -> Result<f64> {
        let p = value.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&p) {
            return Err(Usage(format!("field `{name}` must lie in [0, 1], got {p}")).into());
        }
        Ok(p)
    }

    /// Path of a required input, checked to exist.
    pub fn input(&self, name: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let path = value.clone().ok_or_else(|| Usage(format!("missing field `{name}`")))?;
        existing(&path).with_context(|| format!("field `{name}`"))?;
        Ok(path)
    }
}

pub fn existing(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Usage(format!("no such file: {}", path.display())).into());
    }
    Ok(())
}
