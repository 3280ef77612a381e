//! Transfer operations: a supervision matrix `delta` that routes one
//! language's sufficient statistics into the Dirichlet prior of the other,
//! `h(delta, N, xi) = delta . N + xi`.
//!
//! Document-level supervision (DocLink, SoftLink) has one row per target
//! document and one column per source document. Word-level supervision
//! (VocLink) has one row per first-level cell of the translation tree and one
//! column per source word type.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Lexicon, PairedCorpus};
use crate::error::{Error, Result};

/// Default SoftLink focus threshold.
pub const DEFAULT_FOCUS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Side 1 statistics feed side 2 priors.
    ToSide2,
    /// Side 2 statistics feed side 1 priors.
    ToSide1,
}

impl Direction {
    pub fn source(self) -> usize {
        match self {
            Direction::ToSide2 => 0,
            Direction::ToSide1 => 1,
        }
    }

    pub fn target(self) -> usize {
        1 - self.source()
    }

    /// The direction whose target is `lang`.
    pub fn into_lang(lang: usize) -> Direction {
        if lang == 0 {
            Direction::ToSide1
        } else {
            Direction::ToSide2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetLevel {
    Document,
    Word,
}

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub direction: Direction,
    pub level: TargetLevel,
    /// Number of source objects (columns of delta).
    pub source_dim: usize,
    /// One sparse row per target object, column indices ascending.
    pub rows: Vec<SparseRow>,
    /// Prior vector over the target distribution's support.
    pub prior: Vec<f64>,
}

impl TransferSpec {
    pub fn target_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, target: usize) -> &[(usize, f64)] {
        &self.rows[target]
    }

    /// `delta[target] . stats + prior`.
    pub fn apply<S: AsRef<[u32]>>(&self, target: usize, stats: &[S]) -> Result<Vec<f64>> {
        if target >= self.rows.len() {
            return Err(Error::Shape(format!(
                "row {target} out of range for {} target objects",
                self.rows.len()
            )));
        }
        if stats.len() != self.source_dim {
            return Err(Error::Shape(format!(
                "statistics have {} rows, delta has {} columns",
                stats.len(),
                self.source_dim
            )));
        }
        apply_transfer(&self.rows[target], stats, &self.prior)
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Row-major sparse triplet dump for inspection.
    pub fn debug_json(&self) -> serde_json::Value {
        let triplets: Vec<(usize, usize, f64)> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
            .collect();
        serde_json::json!({
            "direction": self.direction,
            "level": self.level,
            "shape": [self.rows.len(), self.source_dim],
            "triplets": triplets,
            "prior": self.prior,
        })
    }
}

/// The transfer operation for one target object: `row . stats + prior`,
/// where `stats` has one row (length `prior.len()`) per source object.
pub fn apply_transfer<S: AsRef<[u32]>>(
    row: &[(usize, f64)],
    stats: &[S],
    prior: &[f64],
) -> Result<Vec<f64>> {
    let mut out = prior.to_vec();
    for &(j, weight) in row {
        let src = stats
            .get(j)
            .ok_or_else(|| Error::Shape(format!("column {j} has no statistics row")))?
            .as_ref();
        if src.len() != prior.len() {
            return Err(Error::Shape(format!(
                "statistics row of length {} against prior of length {}",
                src.len(),
                prior.len()
            )));
        }
        for (o, &n) in out.iter_mut().zip(src) {
            *o += weight * n as f64;
        }
    }
    Ok(out)
}

fn check_prior(k: usize, alpha: f64) -> Result<()> {
    if k == 0 || !(alpha > 0.0) {
        return Err(Error::Hyperparameter(format!(
            "document prior needs K >= 1 and alpha > 0 (K = {k}, alpha = {alpha})"
        )));
    }
    Ok(())
}

/// Indicator supervision from explicit document links.
pub fn build_doclink_delta(
    paired: &PairedCorpus,
    direction: Direction,
    k: usize,
    alpha: f64,
) -> Result<TransferSpec> {
    check_prior(k, alpha)?;
    let target = direction.target();
    let mut rows = vec![SparseRow::new(); paired.side(target).len()];
    for (d, partner) in paired.counterparts(target).into_iter().enumerate() {
        if let Some(src) = partner {
            rows[d].push((src, 1.0));
        }
    }
    Ok(TransferSpec {
        direction,
        level: TargetLevel::Document,
        source_dim: paired.side(direction.source()).len(),
        rows,
        prior: vec![alpha; k],
    })
}

fn type_set(doc: &Document) -> Vec<usize> {
    let mut t = doc.tokens.clone();
    t.sort_unstable();
    t.dedup();
    t
}

/// Keeps entries strictly above `pi * max(row)` and renormalizes them to sum
/// to one. All-zero rows stay empty.
pub fn focus(row: &mut SparseRow, pi: f64) {
    row.retain(|&(_, v)| v > 0.0);
    let Some(max) = row.iter().map(|&(_, v)| v).reduce(f64::max) else {
        return;
    };
    let cut = pi * max;
    row.retain(|&(_, v)| v > cut);
    let total: f64 = row.iter().map(|&(_, v)| v).sum();
    for e in row.iter_mut() {
        e.1 /= total;
    }
}

/// Jaccard-style overlap between two documents' type sets where "shared"
/// means a lexicon pair with one side in each document.
pub fn translation_jaccard(pairs_shared: usize, types_a: usize, types_b: usize) -> f64 {
    if pairs_shared == 0 {
        return 0.0;
    }
    // Many-to-many entries can count more shared pairs than distinct types.
    let union = (types_a + types_b).saturating_sub(pairs_shared).max(pairs_shared);
    pairs_shared as f64 / union as f64
}

/// SoftLink transfer distributions: every target document gets a sparse
/// distribution over source documents, scored by lexicon overlap and
/// thresholded at `pi` times the row maximum.
pub fn build_softlink_delta(
    paired: &PairedCorpus,
    lex: &Lexicon,
    pi: f64,
    direction: Direction,
    k: usize,
    alpha: f64,
) -> Result<TransferSpec> {
    check_prior(k, alpha)?;
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::Hyperparameter(format!("focus threshold {pi} outside [0, 1]")));
    }
    let (src, tgt) = (direction.source(), direction.target());
    let src_docs: Vec<Vec<usize>> = paired.side(src).iter().map(type_set).collect();
    let tgt_docs: Vec<Vec<usize>> = paired.side(tgt).iter().map(type_set).collect();

    // target word -> source words translating it
    let mut translations: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in &lex.entries {
        let (s, t) = if src == 0 { (a, b) } else { (b, a) };
        translations.entry(t).or_default().push(s);
    }
    // source word -> source documents containing it
    let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
    for (d, types) in src_docs.iter().enumerate() {
        for &w in types {
            if lex.entries.is_empty() {
                break;
            }
            postings.entry(w).or_default().push(d);
        }
    }

    let mut shared = vec![0usize; src_docs.len()];
    let mut touched = Vec::new();
    let mut pair_count: HashMap<usize, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(tgt_docs.len());
    for types in &tgt_docs {
        pair_count.clear();
        for w in types {
            if let Some(srcs) = translations.get(w) {
                for &s in srcs {
                    *pair_count.entry(s).or_insert(0) += 1;
                }
            }
        }
        for (s, &c) in &pair_count {
            if let Some(docs) = postings.get(s) {
                for &d in docs {
                    if shared[d] == 0 {
                        touched.push(d);
                    }
                    shared[d] += c;
                }
            }
        }
        touched.sort_unstable();
        let mut row: SparseRow = touched
            .iter()
            .map(|&d| (d, translation_jaccard(shared[d], src_docs[d].len(), types.len())))
            .collect();
        for &d in &touched {
            shared[d] = 0;
        }
        touched.clear();
        focus(&mut row, pi);
        rows.push(row);
    }
    Ok(TransferSpec {
        direction,
        level: TargetLevel::Document,
        source_dim: src_docs.len(),
        rows,
        prior: vec![alpha; k],
    })
}

/// One internal node: a connected group of translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Word types under the node, per language, ascending.
    pub words: [Vec<usize>; 2],
    /// Number of lexicon pairs inside the node.
    pub multiplicity: usize,
}

/// A root-to-leaf path. Cells `0..nodes.len()` are internal nodes; the
/// remaining cells of a language are its untranslated words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreePath {
    pub cell: usize,
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationTree {
    pub nodes: Vec<TreeNode>,
    pub untranslated: [Vec<usize>; 2],
    /// Root prior over first-level cells, per language.
    pub first_level_prior: [Vec<f64>; 2],
    /// Symmetric prior under every internal node.
    pub within_prior: f64,
    pub scale: f64,
    /// Per language, per word type, the word's paths.
    pub paths: [Vec<Vec<TreePath>>; 2],
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Groups translations into internal nodes (connected components of the
/// bipartite lexicon graph); untranslated words hang off the root.
pub fn build_translation_tree(
    lex: &Lexicon,
    vocab_sizes: [usize; 2],
    beta_prime: f64,
    beta_double_prime: f64,
) -> Result<TranslationTree> {
    if !(beta_prime > 0.0) || !(beta_double_prime > 0.0) {
        return Err(Error::Hyperparameter(format!(
            "tree priors must be positive (beta' = {beta_prime}, beta'' = {beta_double_prime})"
        )));
    }
    let [v1, v2] = vocab_sizes;
    let mut sets = DisjointSet((0..v1 + v2).collect());
    for &(a, b) in &lex.entries {
        if a >= v1 || b >= v2 {
            return Err(Error::Shape(format!("lexicon entry ({a}, {b}) outside vocabularies")));
        }
        sets.union(a, v1 + b);
    }

    // Components are numbered by their smallest member, which is a side-1 word.
    let mut node_of_root: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<TreeNode> = Vec::new();
    for &(a, _) in &lex.entries {
        let root = sets.find(a);
        let next = node_of_root.len();
        node_of_root.entry(root).or_insert(next);
    }
    let mut order: Vec<(usize, usize)> = node_of_root.iter().map(|(&r, &n)| (r, n)).collect();
    order.sort_unstable();
    let renumber: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &(r, _))| (r, i)).collect();
    nodes.resize(
        renumber.len(),
        TreeNode {
            words: [Vec::new(), Vec::new()],
            multiplicity: 0,
        },
    );
    for &(a, _) in &lex.entries {
        let root = sets.find(a);
        nodes[renumber[&root]].multiplicity += 1;
    }

    let mut paths: [Vec<Vec<TreePath>>; 2] = [vec![Vec::new(); v1], vec![Vec::new(); v2]];
    let mut untranslated: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for lang in 0..2 {
        let offset = if lang == 0 { 0 } else { v1 };
        for w in 0..vocab_sizes[lang] {
            let root = sets.find(offset + w);
            if let Some(&node) = renumber.get(&root) {
                nodes[node].words[lang].push(w);
                paths[lang][w].push(TreePath {
                    cell: node,
                    node: Some(node),
                });
            } else {
                untranslated[lang].push(w);
            }
        }
        let base = nodes.len();
        for (j, &w) in untranslated[lang].iter().enumerate() {
            paths[lang][w].push(TreePath {
                cell: base + j,
                node: None,
            });
        }
    }

    let first_level_prior = [0, 1].map(|lang| {
        nodes
            .iter()
            .map(|n| beta_prime * n.multiplicity as f64)
            .chain(std::iter::repeat_n(beta_prime, untranslated[lang].len()))
            .collect::<Vec<f64>>()
    });
    Ok(TranslationTree {
        nodes,
        untranslated,
        first_level_prior,
        within_prior: beta_double_prime,
        scale: beta_prime,
        paths,
    })
}

impl TranslationTree {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self, lang: usize) -> usize {
        self.nodes.len() + self.untranslated[lang].len()
    }

    pub fn vocab_size(&self, lang: usize) -> usize {
        self.paths[lang].len()
    }

    /// Word-level supervision into `direction.target()`: node rows indicate
    /// the source words under that node; untranslated rows are empty.
    pub fn delta(&self, direction: Direction) -> TransferSpec {
        let (src, tgt) = (direction.source(), direction.target());
        let mut rows: Vec<SparseRow> = self
            .nodes
            .iter()
            .map(|n| n.words[src].iter().map(|&w| (w, 1.0)).collect())
            .collect();
        rows.resize(self.num_cells(tgt), SparseRow::new());
        TransferSpec {
            direction,
            level: TargetLevel::Word,
            source_dim: self.vocab_size(src),
            rows,
            prior: self.first_level_prior[tgt].clone(),
        }
    }
}
