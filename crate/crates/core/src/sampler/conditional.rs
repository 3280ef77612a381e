//! Per-token collapsed conditionals, factored into a document-level vote and
//! a word-level vote. Every function expects the current token to be already
//! removed from the counts it is given.
//!
//! The sampler builds its conditionals from the `*_into` kernels below; the
//! allocating wrappers exist for callers that hold raw count fixtures.

/// `out[k] = own[k] + transferred[k] + alpha`.
pub fn doc_vote_into(own: &[u32], transferred: Option<&[f64]>, alpha: f64, out: &mut [f64]) {
    match transferred {
        Some(t) => {
            for ((o, &n), &x) in out.iter_mut().zip(own).zip(t) {
                *o = n as f64 + x + alpha;
            }
        }
        None => {
            for (o, &n) in out.iter_mut().zip(own) {
                *o = n as f64 + alpha;
            }
        }
    }
}

/// Collapsed Beta-Bernoulli language selector: the probability that a
/// topic-`k` token of the document pair surfaces in the current language,
/// `(own[k] + chi) / (own[k] + other[k] + 2 chi)`. Multiplies into `out`.
pub fn selector_into(own: &[u32], other: &[f64], chi: f64, out: &mut [f64]) {
    for ((o, &n), &m) in out.iter_mut().zip(own).zip(other) {
        let n = n as f64;
        *o *= (n + chi) / (n + m + 2.0 * chi);
    }
}

/// `out[k] = (word[k] + beta) / (totals[k] + V beta)`.
pub fn flat_word_vote_into(word: &[u32], totals: &[u32], beta: f64, vocab_size: usize, out: &mut [f64]) {
    let vbeta = vocab_size as f64 * beta;
    for ((o, &n), &t) in out.iter_mut().zip(word).zip(totals) {
        *o = (n as f64 + beta) / (t as f64 + vbeta);
    }
}

pub fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    } else if !v.is_empty() {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

fn product(doc: &[f64], word: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = doc.iter().zip(word).map(|(a, b)| a * b).collect();
    normalize(&mut p);
    p
}

/// Monolingual LDA: `(n_{k|d} + alpha) (n_{w|k} + beta) / (n_{.|k} + V beta)`.
pub fn lda(doc: &[u32], word: &[u32], totals: &[u32], alpha: f64, beta: f64, vocab_size: usize) -> Vec<f64> {
    let k = doc.len();
    let mut d = vec![0.0; k];
    let mut w = vec![0.0; k];
    doc_vote_into(doc, None, alpha, &mut d);
    flat_word_vote_into(word, totals, beta, vocab_size, &mut w);
    product(&d, &w)
}

/// DocLink: the document prior becomes `delta . N + alpha`, where
/// `transferred` is the counterpart's topic histogram.
pub fn doclink(
    doc: &[u32],
    transferred: &[f64],
    word: &[u32],
    totals: &[u32],
    alpha: f64,
    beta: f64,
    vocab_size: usize,
) -> Vec<f64> {
    let k = doc.len();
    let mut d = vec![0.0; k];
    let mut w = vec![0.0; k];
    doc_vote_into(doc, Some(transferred), alpha, &mut d);
    flat_word_vote_into(word, totals, beta, vocab_size, &mut w);
    product(&d, &w)
}

/// SoftLink: like DocLink with a weighted combination of source histograms.
#[allow(clippy::too_many_arguments)]
pub fn softlink<S: AsRef<[u32]>>(
    doc: &[u32],
    delta_row: &[(usize, f64)],
    source_docs: &[S],
    word: &[u32],
    totals: &[u32],
    alpha: f64,
    beta: f64,
    vocab_size: usize,
) -> Vec<f64> {
    let transferred = weighted_histogram(delta_row, source_docs, doc.len());
    doclink(doc, &transferred, word, totals, alpha, beta, vocab_size)
}

pub fn weighted_histogram<S: AsRef<[u32]>>(row: &[(usize, f64)], source_docs: &[S], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for &(j, weight) in row {
        for (o, &n) in out.iter_mut().zip(source_docs[j].as_ref()) {
            *o += weight * n as f64;
        }
    }
    out
}

/// C-BiLDA: DocLink's document vote times the language selector factor.
/// `other` is the topic histogram of the pair's other-language document.
#[allow(clippy::too_many_arguments)]
pub fn cbilda(
    doc: &[u32],
    other: &[f64],
    word: &[u32],
    totals: &[u32],
    alpha: f64,
    beta: f64,
    vocab_size: usize,
    chi: f64,
) -> Vec<f64> {
    let k = doc.len();
    let mut d = vec![0.0; k];
    let mut w = vec![0.0; k];
    doc_vote_into(doc, Some(other), alpha, &mut d);
    selector_into(doc, other, chi, &mut d);
    flat_word_vote_into(word, totals, beta, vocab_size, &mut w);
    product(&d, &w)
}

/// Counts needed to score one path of a word in the translation tree, for
/// every topic.
#[derive(Debug, Clone)]
pub struct PathCounts<'a> {
    /// Tokens of this language in the path's first-level cell, per topic.
    pub cell: &'a [u32],
    /// Counterpart-language tokens under the same internal node, per topic
    /// (the transferred statistics); `None` for untranslated words.
    pub transferred: Option<&'a [u32]>,
    /// Root prior of the cell.
    pub cell_prior: f64,
    /// For paths through an internal node: tokens of this word on this path,
    /// per topic, and the number of this language's words under the node.
    pub within: Option<(&'a [u32], usize)>,
}

/// Word vote of one tree path for every topic:
/// `(n_{c|k} + [delta N]_c + beta_c) / (n_{.|k} + T_k + sum beta)`, times
/// `(n_{w|i,k} + beta'') / (n_{i|k} + V_i beta'')` when the path passes node `i`.
/// `totals[k]` counts this language's tokens of topic `k`; `transferred_totals[k]`
/// counts counterpart tokens of topic `k` under any internal node.
pub fn tree_path_vote_into(
    path: &PathCounts<'_>,
    totals: &[u32],
    transferred_totals: &[u32],
    prior_mass: f64,
    within_prior: f64,
    out: &mut [f64],
) {
    for (k, o) in out.iter_mut().enumerate() {
        let moved = path.transferred.map_or(0.0, |t| t[k] as f64);
        let mut v = (path.cell[k] as f64 + moved + path.cell_prior)
            / (totals[k] as f64 + transferred_totals[k] as f64 + prior_mass);
        if let Some((word, node_size)) = path.within {
            v *= (word[k] as f64 + within_prior) / (path.cell[k] as f64 + node_size as f64 * within_prior);
        }
        *o = v;
    }
}

/// VocLink conditional over (topic, path) pairs, laid out topic-major:
/// entry `k * paths.len() + p`.
pub fn voclink(
    doc: &[u32],
    alpha: f64,
    paths: &[PathCounts<'_>],
    totals: &[u32],
    transferred_totals: &[u32],
    prior_mass: f64,
    within_prior: f64,
) -> Vec<f64> {
    let k = doc.len();
    let np = paths.len();
    let mut d = vec![0.0; k];
    doc_vote_into(doc, None, alpha, &mut d);
    let mut w = vec![0.0; k];
    let mut out = vec![0.0; k * np];
    for (p, path) in paths.iter().enumerate() {
        tree_path_vote_into(path, totals, transferred_totals, prior_mass, within_prior, &mut w);
        for t in 0..k {
            out[t * np + p] = d[t] * w[t];
        }
    }
    normalize(&mut out);
    out
}

/// Joint-form collapsed conditional for one categorical variable pooled with
/// a second, fixed sample: `(n_x + n_y + alpha_k) / (N_x + N_y + sum alpha)`.
/// `own` excludes the token being resampled.
pub fn pooled_conditional(own: &[u32], other: &[u32], alpha: &[f64]) -> Vec<f64> {
    let n: f64 = own.iter().chain(other).map(|&c| c as f64).sum();
    let a: f64 = alpha.iter().sum();
    own.iter()
        .zip(other)
        .zip(alpha)
        .map(|((&x, &y), &ak)| (x as f64 + y as f64 + ak) / (n + a))
        .collect()
}

/// The same conditional in transfer form: the other sample's histogram is
/// folded into the prior first, `(n_x + (n_y + alpha_k)) / (N_x + (N_y + sum alpha))`.
pub fn transferred_conditional(own: &[u32], other: &[u32], alpha: &[f64]) -> Vec<f64> {
    let prior: Vec<f64> = other.iter().zip(alpha).map(|(&y, &ak)| y as f64 + ak).collect();
    let n_own: f64 = own.iter().map(|&c| c as f64).sum();
    let mass: f64 = prior.iter().sum();
    own.iter()
        .zip(&prior)
        .map(|(&x, &p)| (x as f64 + p) / (n_own + mass))
        .collect()
}
