use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{draw, Hyperparameters, ModelKind, Sampler};
use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA: u32 = 1;

/// Saved assignments of one chain, enough to resume sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub seed: u64,
    pub assignments: [Vec<Vec<u32>>; 2],
    pub paths: [Vec<Vec<u32>>; 2],
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// SHA-256 of the topic and path assignments.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for lang in 0..2 {
            for (z, p) in self.assignments[lang].iter().zip(&self.paths[lang]) {
                for (t, q) in z.iter().zip(p) {
                    h.update(t.to_le_bytes());
                    h.update(q.to_le_bytes());
                }
                h.update(b"|");
            }
        }
        hex::encode(h.finalize())
    }
}

/// Per-level estimates of the translation tree, rows indexed by topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEstimates {
    /// `first_level[lang][k][cell]`.
    pub first_level: [Vec<Vec<f64>>; 2],
    /// `within[lang][k][w]`: probability of `w` inside its node; 1 for
    /// untranslated words.
    pub within: [Vec<Vec<f64>>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema: u32,
    pub kind: ModelKind,
    pub hyper: Hyperparameters,
    pub languages: [String; 2],
    pub vocab: [Vec<String>; 2],
    pub vocab_hash: [String; 2],
    pub supervision: String,
    pub chain: usize,
    pub seed: u64,
    /// `phi[lang][k][w]`; the path marginal for VocLink.
    pub phi: [Vec<Vec<f64>>; 2],
    /// `theta[lang][d][k]`.
    pub theta: [Vec<Vec<f64>>; 2],
    pub doc_ids: [Vec<String>; 2],
    pub tree: Option<TreeEstimates>,
}

pub fn vocab_hash(types: &[String]) -> String {
    let mut h = Sha256::new();
    for t in types {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl TrainedModel {
    /// Point estimates from the sampler's current state.
    pub fn estimate(sampler: &Sampler<'_>, chain: usize, seed: u64) -> TrainedModel {
        let state = sampler.state();
        let corpus = sampler.corpus();
        let hyper = sampler.hyper();
        let k = state.topics();
        let mut tree_est = None;

        let phi = match (sampler.layout.as_ref(), sampler.supervision().tree()) {
            (Some(layout), Some(tree)) => {
                let mut first = [Vec::new(), Vec::new()];
                let mut within = [Vec::new(), Vec::new()];
                let phi = [0, 1].map(|lang| {
                    let other = 1 - lang;
                    let v = corpus.vocab[lang].len();
                    let mut phi_l = Vec::with_capacity(k);
                    for t in 0..k {
                        let denom = state.topic_totals(lang)[t] as f64
                            + state.langs[other].node_total[t] as f64
                            + layout.prior_mass[lang];
                        let cells: Vec<f64> = (0..tree.num_cells(lang))
                            .map(|c| {
                                let moved = if c < tree.num_nodes() { state.cell_topic(other, c)[t] as f64 } else { 0.0 };
                                (state.cell_topic(lang, c)[t] as f64 + moved + tree.first_level_prior[lang][c]) / denom
                            })
                            .collect();
                        let mut row = vec![0.0; v];
                        let mut inner = vec![1.0; v];
                        for (w, paths) in tree.paths[lang].iter().enumerate() {
                            for (p, path) in paths.iter().enumerate() {
                                let mut prob = cells[path.cell];
                                if let Some(i) = path.node {
                                    let slot = layout.slot_offset[lang][w] + p;
                                    let size = tree.nodes[i].words[lang].len() as f64;
                                    let q = (state.word_topic(lang, slot)[t] as f64 + tree.within_prior)
                                        / (state.cell_topic(lang, path.cell)[t] as f64 + size * tree.within_prior);
                                    inner[w] = q;
                                    prob *= q;
                                }
                                row[w] += prob;
                            }
                        }
                        phi_l.push(row);
                        first[lang].push(cells);
                        within[lang].push(inner);
                    }
                    phi_l
                });
                tree_est = Some(TreeEstimates { first_level: first, within });
                phi
            }
            _ => [0, 1].map(|lang| {
                let v = corpus.vocab[lang].len();
                let denom: Vec<f64> = state
                    .topic_totals(lang)
                    .iter()
                    .map(|&n| n as f64 + v as f64 * hyper.beta)
                    .collect();
                (0..k)
                    .map(|t| (0..v).map(|w| (state.word_topic(lang, w)[t] as f64 + hyper.beta) / denom[t]).collect())
                    .collect()
            }),
        };

        let theta = [0, 1].map(|lang| {
            (0..corpus.docs(lang).len())
                .map(|d| {
                    let mut row = sampler.doc_prior_counts(lang, d);
                    super::conditional::normalize(&mut row);
                    row
                })
                .collect()
        });

        TrainedModel {
            schema: MODEL_SCHEMA,
            kind: sampler.kind(),
            hyper: hyper.clone(),
            languages: [0, 1].map(|l| corpus.vocab[l].lang().to_string()),
            vocab: [0, 1].map(|l| corpus.vocab[l].types().to_vec()),
            vocab_hash: [0, 1].map(|l| vocab_hash(corpus.vocab[l].types())),
            supervision: sampler.supervision().fingerprint(),
            chain,
            seed,
            phi,
            theta,
            doc_ids: [0, 1].map(|l| corpus.docs(l).iter().map(|d| d.id.clone()).collect()),
            tree: tree_est,
        }
    }

    pub fn topics(&self) -> usize {
        self.hyper.topics
    }

    /// Language index of `lang` in this model.
    pub fn lang_index(&self, lang: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == lang)
    }

    pub fn vocabulary(&self, lang: usize) -> Result<Vocabulary> {
        Vocabulary::from_types(self.languages[lang].clone(), self.vocab[lang].clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_slice(&bytes)?;
        if model.schema != MODEL_SCHEMA {
            return Err(Error::Invalid(format!(
                "{}: unsupported model schema {}",
                path.display(),
                model.schema
            )));
        }
        for lang in 0..2 {
            if vocab_hash(&model.vocab[lang]) != model.vocab_hash[lang] {
                return Err(Error::Invalid(format!(
                    "{}: vocabulary of side {} does not match its hash",
                    path.display(),
                    lang + 1
                )));
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inference {
    /// `theta[d][k]` for each held-out document.
    pub theta: Vec<Vec<f64>>,
    /// Ids of documents without in-vocabulary tokens.
    pub empty: Vec<String>,
}

/// Held-out inference with the topic-word estimates fixed. Each document is
/// treated on its own, without crosslingual transfer.
pub fn infer(model: &TrainedModel, lang: usize, docs: &[Document], sweeps: usize, seed: u64) -> Result<Inference> {
    let k = model.topics();
    let phi = &model.phi[lang];
    let v = model.vocab[lang].len();
    let alpha = model.hyper.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(docs.len());
    let mut empty = Vec::new();
    let mut weights = vec![0.0; k];
    for doc in docs {
        if let Some(&w) = doc.tokens.iter().find(|&&w| w >= v) {
            return Err(Error::Shape(format!("document `{}` has word {w} outside the model vocabulary", doc.id)));
        }
        if doc.is_empty() {
            log::warn!("document `{}` has no in-vocabulary tokens; its topic estimate is uniform", doc.id);
            empty.push(doc.id.clone());
            theta.push(vec![1.0 / k as f64; k]);
            continue;
        }
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = doc
            .tokens
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        for _ in 0..sweeps {
            for (pos, &w) in doc.tokens.iter().enumerate() {
                counts[z[pos]] -= 1;
                for t in 0..k {
                    weights[t] = (counts[t] as f64 + alpha) * phi[t][w];
                }
                let t = draw(&mut rng, &weights);
                counts[t] += 1;
                z[pos] = t;
            }
        }
        let total = doc.len() as f64 + k as f64 * alpha;
        theta.push(counts.iter().map(|&c| (c as f64 + alpha) / total).collect());
    }
    Ok(Inference { theta, empty })
}
