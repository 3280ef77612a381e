//! Collapsed Gibbs sampling for monolingual LDA and the four crosslingual
//! models.
//!
//! Every model shares one sampler. A token's conditional is the product of a
//! document vote and a word vote; the models differ only in which transfer
//! operation feeds those votes:
//!
//! | model    | document vote                         | word vote              |
//! |----------|---------------------------------------|------------------------|
//! | LDA      | `n_{k|d} + alpha`                     | flat, `beta`           |
//! | DocLink  | `n_{k|d} + delta.N + alpha`           | flat, `beta`           |
//! | C-BiLDA  | DocLink vote times language selector  | flat, `beta`           |
//! | SoftLink | DocLink vote, fractional `delta`      | flat, `beta`           |
//! | VocLink  | `n_{k|d} + alpha`                     | tree, `delta.N + beta_r` |
//!
//! Transfer is symmetric: a side-2 token reads the live side-1 counts through
//! the side-2 supervision rows and vice versa, so linked documents behave as
//! one jointly modelled pair.

pub mod conditional;
mod model;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BilingualCorpus, Lexicon};
use crate::error::{Error, Result};
use crate::transfer::{
    build_doclink_delta, build_softlink_delta, build_translation_tree, Direction, TransferSpec,
    TranslationTree,
};

pub use model::{infer, Checkpoint, Inference, TrainedModel, TreeEstimates, MODEL_SCHEMA};

use conditional::{doc_vote_into, flat_word_vote_into, selector_into, tree_path_vote_into, PathCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lda,
    DocLink,
    CBiLda,
    SoftLink,
    VocLink,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lda,
        ModelKind::DocLink,
        ModelKind::CBiLda,
        ModelKind::SoftLink,
        ModelKind::VocLink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lda => "lda",
            ModelKind::DocLink => "doclink",
            ModelKind::CBiLda => "cbilda",
            ModelKind::SoftLink => "softlink",
            ModelKind::VocLink => "voclink",
        }
    }

    fn uses_doc_transfer(self) -> bool {
        matches!(self, ModelKind::DocLink | ModelKind::CBiLda | ModelKind::SoftLink)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub beta_double_prime: f64,
    pub chi: f64,
    pub focus_threshold: f64,
    pub train_sweeps: usize,
    pub infer_sweeps: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            topics: 20,
            alpha: 0.1,
            beta: 0.01,
            beta_prime: 0.01,
            beta_double_prime: 100.0,
            chi: 2.0,
            focus_threshold: 0.8,
            train_sweeps: 1000,
            infer_sweeps: 200,
            chains: 5,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("beta_prime", self.beta_prime),
            ("beta_double_prime", self.beta_double_prime),
            ("chi", self.chi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Hyperparameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.topics == 0 {
            return Err(Error::Hyperparameter("topics must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.focus_threshold) {
            return Err(Error::Hyperparameter(format!(
                "focus_threshold must lie in [0, 1], got {}",
                self.focus_threshold
            )));
        }
        Ok(())
    }
}

/// Bilingual supervision handed to the sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum Supervision {
    None,
    /// Hard document links (DocLink, C-BiLDA).
    Links { to_side1: TransferSpec, to_side2: TransferSpec },
    /// Lexicon-derived transfer distributions (SoftLink).
    Soft { to_side1: TransferSpec, to_side2: TransferSpec },
    /// Translation tree (VocLink).
    Tree(TranslationTree),
}

impl Supervision {
    pub fn name(&self) -> &'static str {
        match self {
            Supervision::None => "no",
            Supervision::Links { .. } => "document-link",
            Supervision::Soft { .. } => "transfer-distribution",
            Supervision::Tree(_) => "translation-tree",
        }
    }

    /// Builds the supervision `kind` needs from the corpus links and lexicon.
    pub fn build(kind: ModelKind, corpus: &BilingualCorpus, lexicon: &Lexicon, hyper: &Hyperparameters) -> Result<Self> {
        let (k, a) = (hyper.topics, hyper.alpha);
        let paired = &corpus.paired;
        Ok(match kind {
            ModelKind::Lda => Supervision::None,
            ModelKind::DocLink | ModelKind::CBiLda => Supervision::Links {
                to_side1: build_doclink_delta(paired, Direction::ToSide1, k, a)?,
                to_side2: build_doclink_delta(paired, Direction::ToSide2, k, a)?,
            },
            ModelKind::SoftLink => {
                let pi = hyper.focus_threshold;
                Supervision::Soft {
                    to_side1: build_softlink_delta(paired, lexicon, pi, Direction::ToSide1, k, a)?,
                    to_side2: build_softlink_delta(paired, lexicon, pi, Direction::ToSide2, k, a)?,
                }
            }
            ModelKind::VocLink => Supervision::Tree(build_translation_tree(
                lexicon,
                corpus.vocab_sizes(),
                hyper.beta_prime,
                hyper.beta_double_prime,
            )?),
        })
    }

    fn accepts(&self, kind: ModelKind) -> bool {
        matches!(
            (kind, self),
            (ModelKind::Lda, Supervision::None)
                | (ModelKind::DocLink | ModelKind::CBiLda, Supervision::Links { .. })
                | (ModelKind::SoftLink, Supervision::Soft { .. })
                | (ModelKind::VocLink, Supervision::Tree(_))
        )
    }

    /// Document-level rows whose target is `lang`.
    fn doc_rows(&self, lang: usize) -> Option<&TransferSpec> {
        match self {
            Supervision::Links { to_side1, to_side2 } | Supervision::Soft { to_side1, to_side2 } => {
                Some(if lang == 0 { to_side1 } else { to_side2 })
            }
            _ => None,
        }
    }

    pub fn tree(&self) -> Option<&TranslationTree> {
        match self {
            Supervision::Tree(t) => Some(t),
            _ => None,
        }
    }

    /// Content hash of the supervision, recorded in trained models.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.name().as_bytes());
        match self {
            Supervision::None => {}
            Supervision::Links { to_side1, to_side2 } | Supervision::Soft { to_side1, to_side2 } => {
                h.update(to_side1.debug_json().to_string().as_bytes());
                h.update(to_side2.debug_json().to_string().as_bytes());
            }
            Supervision::Tree(t) => {
                h.update(serde_json::to_string(t).unwrap_or_default().as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Derives an independent stream seed from a base seed and an index
/// (chains, sweep cells).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a mixed input
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Count tables and assignments of one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LangCounts {
    z: Vec<Vec<u32>>,
    path: Vec<Vec<u32>>,
    doc_topic: Vec<u32>,
    /// Rows are word types for flat models, path slots for VocLink.
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    /// VocLink first-level cell counts.
    cell_topic: Vec<u32>,
    /// VocLink tokens under any internal node, per topic.
    node_total: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    topics: usize,
    langs: [LangCounts; 2],
    rng: ChaCha8Rng,
}

impl SamplerState {
    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn assignments(&self, lang: usize) -> &[Vec<u32>] {
        &self.langs[lang].z
    }

    pub fn path_choices(&self, lang: usize) -> &[Vec<u32>] {
        &self.langs[lang].path
    }

    /// `n_{k|d}` for document `doc` of `lang`.
    pub fn doc_topic(&self, lang: usize, doc: usize) -> &[u32] {
        let k = self.topics;
        &self.langs[lang].doc_topic[doc * k..(doc + 1) * k]
    }

    /// `n_{w|k}` for flat models; for VocLink, row `w` is a path slot.
    pub fn word_topic(&self, lang: usize, row: usize) -> &[u32] {
        let k = self.topics;
        &self.langs[lang].word_topic[row * k..(row + 1) * k]
    }

    pub fn word_topic_rows(&self, lang: usize) -> usize {
        self.langs[lang].word_topic.len() / self.topics
    }

    /// `n_{.|k}`.
    pub fn topic_totals(&self, lang: usize) -> &[u32] {
        &self.langs[lang].topic_total
    }

    pub fn cell_topic(&self, lang: usize, cell: usize) -> &[u32] {
        let k = self.topics;
        &self.langs[lang].cell_topic[cell * k..(cell + 1) * k]
    }

    pub fn num_docs(&self, lang: usize) -> usize {
        self.langs[lang].z.len()
    }
}

/// Path-slot layout of the translation tree: slot `slot_offset[w] + p` holds
/// the counts of word `w` on its `p`-th path.
#[derive(Debug, Clone)]
struct TreeLayout {
    slot_offset: [Vec<usize>; 2],
    prior_mass: [f64; 2],
}

impl TreeLayout {
    fn new(tree: &TranslationTree) -> Self {
        let slot_offset = [0, 1].map(|lang| {
            let mut off = Vec::with_capacity(tree.paths[lang].len() + 1);
            let mut acc = 0;
            off.push(0);
            for p in &tree.paths[lang] {
                acc += p.len();
                off.push(acc);
            }
            off
        });
        let prior_mass = [0, 1].map(|lang| tree.first_level_prior[lang].iter().sum());
        TreeLayout { slot_offset, prior_mass }
    }
}

/// Document and word votes of one token, both over topics and unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Votes {
    pub doc: Vec<f64>,
    pub word: Vec<f64>,
}

pub struct Sampler<'a> {
    kind: ModelKind,
    hyper: Hyperparameters,
    corpus: &'a BilingualCorpus,
    supervision: &'a Supervision,
    layout: Option<TreeLayout>,
    state: SamplerState,
    doc_buf: Vec<f64>,
    word_buf: Vec<f64>,
    path_buf: Vec<f64>,
    transfer_buf: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Sampler<'a> {
    /// Assigns every token a uniformly random topic (and path, where a word
    /// has several) and builds consistent count tables.
    pub fn new(
        kind: ModelKind,
        corpus: &'a BilingualCorpus,
        supervision: &'a Supervision,
        hyper: &Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = supervision.tree();
        let k = hyper.topics as u32;
        let mut assign = [Vec::new(), Vec::new()];
        let mut paths = [Vec::new(), Vec::new()];
        for lang in 0..2 {
            for doc in corpus.docs(lang) {
                let mut z = Vec::with_capacity(doc.len());
                let mut p = Vec::with_capacity(doc.len());
                for &w in &doc.tokens {
                    z.push(rng.random_range(0..k.max(1)));
                    let np = tree.and_then(|t| t.paths[lang].get(w)).map_or(1, Vec::len) as u32;
                    p.push(if np > 1 { rng.random_range(0..np) } else { 0 });
                }
                assign[lang].push(z);
                paths[lang].push(p);
            }
        }
        Self::with_assignments(kind, corpus, supervision, hyper, assign, paths, rng)
    }

    /// Rebuilds a sampler from saved assignments.
    pub fn restore(
        kind: ModelKind,
        corpus: &'a BilingualCorpus,
        supervision: &'a Supervision,
        hyper: &Hyperparameters,
        checkpoint: &Checkpoint,
    ) -> Result<Self> {
        if checkpoint.kind != kind {
            return Err(Error::Invalid(format!(
                "checkpoint is for `{}`, not `{kind}`",
                checkpoint.kind
            )));
        }
        Self::with_assignments(
            kind,
            corpus,
            supervision,
            hyper,
            checkpoint.assignments.clone(),
            checkpoint.paths.clone(),
            ChaCha8Rng::seed_from_u64(checkpoint.seed),
        )
    }

    fn with_assignments(
        kind: ModelKind,
        corpus: &'a BilingualCorpus,
        supervision: &'a Supervision,
        hyper: &Hyperparameters,
        assignments: [Vec<Vec<u32>>; 2],
        paths: [Vec<Vec<u32>>; 2],
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        hyper.validate()?;
        if !supervision.accepts(kind) {
            return Err(Error::SupervisionMismatch {
                kind: kind.name(),
                given: supervision.name(),
            });
        }
        check_supervision_shape(corpus, supervision)?;
        let k = hyper.topics;
        let layout = supervision.tree().map(TreeLayout::new);

        let langs = [0, 1].map(|lang| {
            let docs = corpus.docs(lang);
            let rows = match (&layout, supervision.tree()) {
                (Some(l), _) => l.slot_offset[lang][corpus.vocab[lang].len()],
                _ => corpus.vocab[lang].len(),
            };
            let cells = supervision.tree().map_or(0, |t| t.num_cells(lang));
            LangCounts {
                z: Vec::with_capacity(docs.len()),
                path: Vec::with_capacity(docs.len()),
                doc_topic: vec![0; docs.len() * k],
                word_topic: vec![0; rows * k],
                topic_total: vec![0; k],
                cell_topic: vec![0; cells * k],
                node_total: vec![0; k],
            }
        });
        let mut sampler = Sampler {
            kind,
            hyper: hyper.clone(),
            corpus,
            supervision,
            layout,
            state: SamplerState { topics: k, langs, rng },
            doc_buf: vec![0.0; k],
            word_buf: Vec::new(),
            path_buf: vec![0.0; k],
            transfer_buf: vec![0.0; k],
            weights: Vec::new(),
        };

        let [a0, a1] = assignments;
        let [p0, p1] = paths;
        for (lang, (z, p)) in [(a0, p0), (a1, p1)].into_iter().enumerate() {
            let docs = corpus.docs(lang);
            if z.len() != docs.len() || p.len() != docs.len() {
                return Err(Error::Shape(format!("assignments do not match the documents of side {}", lang + 1)));
            }
            for (d, doc) in docs.iter().enumerate() {
                if z[d].len() != doc.len() || p[d].len() != doc.len() {
                    return Err(Error::Shape(format!("assignments do not match document `{}`", doc.id)));
                }
                for (pos, &w) in doc.tokens.iter().enumerate() {
                    let (t, path) = (z[d][pos] as usize, p[d][pos] as usize);
                    if t >= k || path >= sampler.num_paths(lang, w) {
                        return Err(Error::Shape(format!("assignment out of range in document `{}`", doc.id)));
                    }
                    sampler.add(lang, d, w, t, path);
                }
            }
            sampler.state.langs[lang].z = z;
            sampler.state.langs[lang].path = p;
        }
        Ok(sampler)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn corpus(&self) -> &'a BilingualCorpus {
        self.corpus
    }

    pub fn supervision(&self) -> &'a Supervision {
        self.supervision
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            kind: self.kind,
            seed,
            assignments: [self.state.langs[0].z.clone(), self.state.langs[1].z.clone()],
            paths: [self.state.langs[0].path.clone(), self.state.langs[1].path.clone()],
        }
    }

    fn num_paths(&self, lang: usize, w: usize) -> usize {
        match &self.layout {
            Some(l) => l.slot_offset[lang][w + 1] - l.slot_offset[lang][w],
            None => 1,
        }
    }

    fn add(&mut self, lang: usize, d: usize, w: usize, t: usize, p: usize) {
        self.update(lang, d, w, t, p, true)
    }

    fn remove(&mut self, lang: usize, d: usize, w: usize, t: usize, p: usize) {
        self.update(lang, d, w, t, p, false)
    }

    fn update(&mut self, lang: usize, d: usize, w: usize, t: usize, p: usize, inc: bool) {
        let k = self.state.topics;
        let c = &mut self.state.langs[lang];
        let bump = |x: &mut u32| {
            if inc {
                *x += 1
            } else {
                *x -= 1
            }
        };
        bump(&mut c.doc_topic[d * k + t]);
        bump(&mut c.topic_total[t]);
        match (&self.layout, self.supervision.tree()) {
            (Some(layout), Some(tree)) => {
                let path = tree.paths[lang][w][p];
                bump(&mut c.word_topic[(layout.slot_offset[lang][w] + p) * k + t]);
                bump(&mut c.cell_topic[path.cell * k + t]);
                if path.node.is_some() {
                    bump(&mut c.node_total[t]);
                }
            }
            _ => bump(&mut c.word_topic[w * k + t]),
        }
    }

    /// Fills `doc_buf` with the document vote of document `d` in `lang`.
    fn fill_doc_vote(&mut self, lang: usize, d: usize) {
        let mut out = std::mem::take(&mut self.doc_buf);
        let mut moved = std::mem::take(&mut self.transfer_buf);
        self.doc_vote_with(lang, d, true, &mut moved, &mut out);
        self.doc_buf = out;
        self.transfer_buf = moved;
    }

    /// Document vote of document `d` in `lang`; the C-BiLDA selector is
    /// applied only when `selector` is set.
    fn doc_vote_with(&self, lang: usize, d: usize, selector: bool, moved: &mut [f64], out: &mut [f64]) {
        let k = self.state.topics;
        let own = &self.state.langs[lang].doc_topic[d * k..(d + 1) * k];
        let alpha = self.hyper.alpha;
        if !self.kind.uses_doc_transfer() {
            doc_vote_into(own, None, alpha, out);
            return;
        }
        let rows = self
            .supervision
            .doc_rows(lang)
            .expect("document-level model without document supervision");
        let other = &self.state.langs[1 - lang].doc_topic;
        moved.iter_mut().for_each(|x| *x = 0.0);
        for &(j, weight) in rows.row(d) {
            for (x, &n) in moved.iter_mut().zip(&other[j * k..(j + 1) * k]) {
                *x += weight * n as f64;
            }
        }
        doc_vote_into(own, Some(moved), alpha, out);
        if selector && self.kind == ModelKind::CBiLda {
            selector_into(own, moved, self.hyper.chi, out);
        }
    }

    /// Unnormalized document-topic estimate: counts plus the model's
    /// document-level prior, without the C-BiLDA selector.
    pub(crate) fn doc_prior_counts(&self, lang: usize, d: usize) -> Vec<f64> {
        let k = self.state.topics;
        let (mut moved, mut out) = (vec![0.0; k], vec![0.0; k]);
        self.doc_vote_with(lang, d, false, &mut moved, &mut out);
        out
    }

    /// Fills `word_buf` with the word vote over (topic, path), topic-major,
    /// and returns the number of paths.
    fn fill_word_vote(&mut self, lang: usize, w: usize) -> usize {
        let k = self.state.topics;
        let c = &self.state.langs[lang];
        match (&self.layout, self.supervision.tree()) {
            (Some(layout), Some(tree)) => {
                let paths = &tree.paths[lang][w];
                let np = paths.len();
                self.word_buf.resize(k * np, 0.0);
                let other = &self.state.langs[1 - lang];
                for (p, path) in paths.iter().enumerate() {
                    let slot = layout.slot_offset[lang][w] + p;
                    let counts = PathCounts {
                        cell: &c.cell_topic[path.cell * k..(path.cell + 1) * k],
                        transferred: path.node.map(|i| &other.cell_topic[i * k..(i + 1) * k]),
                        cell_prior: tree.first_level_prior[lang][path.cell],
                        within: path.node.map(|i| {
                            (&c.word_topic[slot * k..(slot + 1) * k], tree.nodes[i].words[lang].len())
                        }),
                    };
                    tree_path_vote_into(
                        &counts,
                        &c.topic_total,
                        &other.node_total,
                        layout.prior_mass[lang],
                        tree.within_prior,
                        &mut self.path_buf,
                    );
                    for (t, &v) in self.path_buf.iter().enumerate() {
                        self.word_buf[t * np + p] = v;
                    }
                }
                np
            }
            _ => {
                self.word_buf.resize(k, 0.0);
                flat_word_vote_into(
                    &c.word_topic[w * k..(w + 1) * k],
                    &c.topic_total,
                    self.hyper.beta,
                    self.corpus.vocab[lang].len(),
                    &mut self.word_buf,
                );
                1
            }
        }
    }

    fn fill_weights(&mut self, lang: usize, d: usize, w: usize) -> usize {
        self.fill_doc_vote(lang, d);
        let np = self.fill_word_vote(lang, w);
        self.weights.clear();
        for (i, &wv) in self.word_buf.iter().enumerate() {
            self.weights.push(self.doc_buf[i / np] * wv);
        }
        np
    }

    fn token(&self, lang: usize, d: usize, pos: usize) -> (usize, usize, usize) {
        let c = &self.state.langs[lang];
        (
            self.corpus.docs(lang)[d].tokens[pos],
            c.z[d][pos] as usize,
            c.path[d][pos] as usize,
        )
    }

    /// Normalized conditional of one token over (topic, path) pairs,
    /// topic-major; for flat models this is a distribution over topics.
    pub fn conditional(&mut self, lang: usize, d: usize, pos: usize) -> Vec<f64> {
        let (w, t, p) = self.token(lang, d, pos);
        self.remove(lang, d, w, t, p);
        self.fill_weights(lang, d, w);
        self.add(lang, d, w, t, p);
        let mut out = self.weights.clone();
        conditional::normalize(&mut out);
        out
    }

    /// Document and word votes of one token with the token itself removed.
    /// The word vote of VocLink is summed over the word's paths.
    pub fn votes(&mut self, lang: usize, d: usize, pos: usize) -> Votes {
        let (w, t, p) = self.token(lang, d, pos);
        self.remove(lang, d, w, t, p);
        self.fill_doc_vote(lang, d);
        let np = self.fill_word_vote(lang, w);
        self.add(lang, d, w, t, p);
        let k = self.state.topics;
        let word = (0..k).map(|t| self.word_buf[t * np..(t + 1) * np].iter().sum()).collect();
        Votes {
            doc: self.doc_buf.clone(),
            word,
        }
    }

    fn resample(&mut self, lang: usize, d: usize, pos: usize) {
        let (w, t, p) = self.token(lang, d, pos);
        self.remove(lang, d, w, t, p);
        let np = self.fill_weights(lang, d, w);
        let idx = draw(&mut self.state.rng, &self.weights);
        let (t, p) = (idx / np, idx % np);
        self.add(lang, d, w, t, p);
        let c = &mut self.state.langs[lang];
        c.z[d][pos] = t as u32;
        c.path[d][pos] = p as u32;
    }

    /// One Gibbs sweep: side 1 documents, then side 2, each token in position order.
    pub fn sweep(&mut self) {
        for lang in 0..2 {
            for d in 0..self.corpus.docs(lang).len() {
                self.sweep_document(lang, d);
            }
        }
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
    }

    /// A sweep visiting documents in the given (language, document) order.
    pub fn sweep_in_order(&mut self, order: &[(usize, usize)]) {
        for &(lang, d) in order {
            self.sweep_document(lang, d);
        }
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
    }

    fn sweep_document(&mut self, lang: usize, d: usize) {
        for pos in 0..self.corpus.docs(lang)[d].len() {
            self.resample(lang, d, pos);
        }
    }

    /// Runs `sweeps` sweeps, calling `progress(sweep, elapsed_ms)` after each.
    pub fn run(&mut self, sweeps: usize, mut progress: impl FnMut(usize, u128)) {
        let start = Instant::now();
        for s in 0..sweeps {
            self.sweep();
            progress(s + 1, start.elapsed().as_millis());
        }
    }

    /// Recomputes every count table from the assignments and compares.
    pub fn check_invariants(&self) -> Result<()> {
        let mut fresh = Sampler {
            kind: self.kind,
            hyper: self.hyper.clone(),
            corpus: self.corpus,
            supervision: self.supervision,
            layout: self.layout.clone(),
            state: SamplerState {
                topics: self.state.topics,
                langs: self.state.langs.clone().map(|mut c| {
                    for v in [&mut c.doc_topic, &mut c.word_topic, &mut c.topic_total, &mut c.cell_topic, &mut c.node_total] {
                        v.iter_mut().for_each(|x| *x = 0);
                    }
                    c
                }),
                rng: self.state.rng.clone(),
            },
            doc_buf: Vec::new(),
            word_buf: Vec::new(),
            path_buf: Vec::new(),
            transfer_buf: Vec::new(),
            weights: Vec::new(),
        };
        let k = self.state.topics;
        for lang in 0..2 {
            let docs = self.corpus.docs(lang);
            for (d, doc) in docs.iter().enumerate() {
                for (pos, &w) in doc.tokens.iter().enumerate() {
                    let (t, p) = (self.state.langs[lang].z[d][pos] as usize, self.state.langs[lang].path[d][pos] as usize);
                    fresh.add(lang, d, w, t, p);
                }
                let n: u32 = self.state.doc_topic(lang, d).iter().sum();
                if n as usize != doc.len() {
                    return Err(Error::Invalid(format!(
                        "side {} document {d}: topic counts sum to {n}, length {}",
                        lang + 1,
                        doc.len()
                    )));
                }
            }
            let c = &self.state.langs[lang];
            for t in 0..k {
                let column: u64 = c.word_topic.iter().skip(t).step_by(k).map(|&x| x as u64).sum();
                if column != c.topic_total[t] as u64 {
                    return Err(Error::Invalid(format!(
                        "side {} topic {t}: word counts sum to {column}, total {}",
                        lang + 1,
                        c.topic_total[t]
                    )));
                }
            }
            if fresh.state.langs[lang] != self.state.langs[lang] {
                return Err(Error::Invalid(format!("side {} count tables drifted from assignments", lang + 1)));
            }
        }
        Ok(())
    }
}

fn check_supervision_shape(corpus: &BilingualCorpus, supervision: &Supervision) -> Result<()> {
    for lang in 0..2 {
        if let Some(spec) = supervision.doc_rows(lang) {
            let (rows, cols) = (corpus.docs(lang).len(), corpus.docs(1 - lang).len());
            if spec.rows.len() != rows || spec.source_dim != cols {
                return Err(Error::Shape(format!(
                    "supervision into side {} is {}x{}, corpus needs {rows}x{cols}",
                    lang + 1,
                    spec.rows.len(),
                    spec.source_dim
                )));
            }
        }
        if let Some(tree) = supervision.tree() {
            if tree.vocab_size(lang) != corpus.vocab[lang].len() {
                return Err(Error::Shape(format!(
                    "translation tree covers {} side-{} words, vocabulary has {}",
                    tree.vocab_size(lang),
                    lang + 1,
                    corpus.vocab[lang].len()
                )));
            }
            if let Some(word) = tree.paths[lang].iter().position(Vec::is_empty) {
                return Err(Error::NoPath { lang, word });
            }
        }
    }
    Ok(())
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len() as u32) as usize;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Trains one chain and returns the model together with its final assignments.
pub fn train_chain(
    kind: ModelKind,
    corpus: &BilingualCorpus,
    supervision: &Supervision,
    hyper: &Hyperparameters,
    chain: usize,
    diagnostics: bool,
) -> Result<(TrainedModel, Checkpoint)> {
    let seed = derive_seed(hyper.seed, chain as u64);
    let mut sampler = Sampler::new(kind, corpus, supervision, hyper, seed)?;
    sampler.run(hyper.train_sweeps, |s, ms| {
        if diagnostics {
            eprintln!("{s}\t{kind}\t{chain}\t{ms}");
        }
    });
    sampler.check_invariants()?;
    let model = TrainedModel::estimate(&sampler, chain, seed);
    Ok((model, sampler.checkpoint(seed)))
}

/// Trains `hyper.chains` independent chains sequentially.
pub fn train(
    kind: ModelKind,
    corpus: &BilingualCorpus,
    supervision: &Supervision,
    hyper: &Hyperparameters,
) -> Result<Vec<TrainedModel>> {
    (0..hyper.chains.max(1))
        .map(|c| train_chain(kind, corpus, supervision, hyper, c, false).map(|(m, _)| m))
        .collect()
}
