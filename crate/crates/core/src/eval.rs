//! Intrinsic evaluation: crosslingual coherence, topic alignment, document
//! frequency of divergent topic words, and the transfer-strength ratio.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::{Document, PairedCorpus};
use crate::error::{Error, Result};
use crate::sampler::{Sampler, TrainedModel};

pub const DEFAULT_TOP_WORDS: usize = 10;
pub const DEFAULT_VALIDITY_FRACTION: f64 = 0.8;

/// Word → document-pair postings of a parallel reference corpus.
#[derive(Debug, Clone)]
pub struct ReferenceCorpus {
    size: usize,
    /// `postings[lang][w]`: ascending pair indices whose `lang` side has `w`.
    postings: [Vec<Vec<u32>>; 2],
}

impl ReferenceCorpus {
    /// Builds the index from per-pair word sets; duplicates are ignored.
    pub fn new(pairs: &[(Vec<usize>, Vec<usize>)], vocab_sizes: [usize; 2]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid("reference corpus has no document pairs".into()));
        }
        let mut postings = vocab_sizes.map(|v| vec![Vec::new(); v]);
        for (i, (a, b)) in pairs.iter().enumerate() {
            for (lang, words) in [a, b].into_iter().enumerate() {
                for w in words.iter().copied().collect::<BTreeSet<_>>() {
                    let list = postings[lang]
                        .get_mut(w)
                        .ok_or_else(|| Error::Shape(format!("reference word {w} outside vocabulary")))?;
                    list.push(i as u32);
                }
            }
        }
        Ok(ReferenceCorpus {
            size: pairs.len(),
            postings,
        })
    }

    /// Uses the linked pairs of a corpus mapped to the model vocabulary.
    pub fn from_paired(paired: &PairedCorpus, vocab_sizes: [usize; 2]) -> Result<Self> {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = paired
            .pairs
            .iter()
            .map(|&(a, b)| (paired.side(0)[a].tokens.clone(), paired.side(1)[b].tokens.clone()))
            .collect();
        Self::new(&pairs, vocab_sizes)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of pairs whose `lang` side contains `w`.
    pub fn document_count(&self, lang: usize, w: usize) -> usize {
        self.postings[lang].get(w).map_or(0, Vec::len)
    }

    pub fn co_occurrences(&self, w1: usize, w2: usize) -> usize {
        let (a, b) = (&self.postings[0][w1], &self.postings[1][w2]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Top words of one bilingual topic, per language, by descending weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicWordSet {
    pub words: [Vec<usize>; 2],
}

/// Indices of the `c` largest entries; ties go to the lower index.
pub fn top_indices(weights: &[f64], c: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(c);
    idx
}

pub fn top_words(model: &TrainedModel, topic: usize, c: usize) -> TopicWordSet {
    TopicWordSet {
        words: [0, 1].map(|lang| top_indices(&model.phi[lang][topic], c)),
    }
}

/// Normalized PMI of a side-1 and a side-2 word from document-pair
/// co-occurrence. Zero co-occurrence gives -1, a pair present in every
/// document gives 0, and a word absent from the reference gives 0.
pub fn npmi_pair(w1: usize, w2: usize, reference: &ReferenceCorpus) -> f64 {
    let n = reference.len() as f64;
    let (c1, c2) = (reference.document_count(0, w1), reference.document_count(1, w2));
    if c1 == 0 || c2 == 0 {
        return 0.0;
    }
    let c12 = reference.co_occurrences(w1, w2);
    if c12 == 0 {
        return -1.0;
    }
    let p12 = c12 as f64 / n;
    if c12 == reference.len() {
        return 0.0;
    }
    let (p1, p2) = (c1 as f64 / n, c2 as f64 / n);
    (-(p12 / (p1 * p2)).ln() / p12.ln()).clamp(-1.0, 1.0)
}

/// Words of the topic that never occur in the reference corpus.
pub fn uncovered_words(topic: &TopicWordSet, reference: &ReferenceCorpus) -> [Vec<usize>; 2] {
    [0, 1].map(|lang| {
        topic.words[lang]
            .iter()
            .copied()
            .filter(|&w| reference.document_count(lang, w) == 0)
            .collect()
    })
}

/// Mean NPMI over all crosslingual pairs of the topic's top words.
pub fn cnpmi(topic: &TopicWordSet, reference: &ReferenceCorpus) -> f64 {
    let [a, b] = &topic.words;
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &w1 in a {
        for &w2 in b {
            total += npmi_pair(w1, w2, reference);
        }
    }
    total / (a.len() * b.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicCoherence {
    pub topics: Vec<f64>,
    pub mean: f64,
    /// Top words with no reference occurrences, per language.
    pub uncovered: [usize; 2],
}

/// CNPMI of every topic of a model.
pub fn model_coherence(model: &TrainedModel, reference: &ReferenceCorpus, c: usize) -> TopicCoherence {
    let mut uncovered = [0, 0];
    let topics: Vec<f64> = (0..model.topics())
        .map(|k| {
            let set = top_words(model, k, c);
            let missing = uncovered_words(&set, reference);
            for lang in 0..2 {
                uncovered[lang] += missing[lang].len();
            }
            cnpmi(&set, reference)
        })
        .collect();
    if uncovered != [0, 0] {
        log::warn!(
            "{} side-1 and {} side-2 top words never occur in the reference corpus; their pairs count as 0",
            uncovered[0],
            uncovered[1]
        );
    }
    TopicCoherence {
        mean: mean(&topics).unwrap_or(0.0),
        topics,
        uncovered,
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn stdev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values).unwrap_or(0.0);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<usize> = a.iter().copied().collect();
    let b: BTreeSet<usize> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Mean over the two languages of the Jaccard index of two topics' top words.
pub fn matching_score(a: &TopicWordSet, b: &TopicWordSet) -> f64 {
    0.5 * (jaccard(&a.words[0], &b.words[0]) + jaccard(&a.words[1], &b.words[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub topic: usize,
    pub partner: usize,
    pub score: f64,
}

/// Matches each topic of `a` to its best-scoring valid topic of `b`. A pair
/// is valid when its score exceeds `fraction` times the best score overall;
/// a non-positive fraction makes every pair valid.
pub fn align_topics(a: &TrainedModel, b: &TrainedModel, c: usize, fraction: f64) -> Result<Vec<Alignment>> {
    if a.topics() != b.topics() {
        return Err(Error::Shape(format!(
            "cannot align {} topics with {} topics",
            a.topics(),
            b.topics()
        )));
    }
    if a.vocab_hash != b.vocab_hash {
        return Err(Error::Shape("models were trained on different vocabularies".into()));
    }
    let ta: Vec<TopicWordSet> = (0..a.topics()).map(|k| top_words(a, k, c)).collect();
    let tb: Vec<TopicWordSet> = (0..b.topics()).map(|k| top_words(b, k, c)).collect();
    Ok(align_sets(&ta, &tb, fraction))
}

pub fn align_sets(a: &[TopicWordSet], b: &[TopicWordSet], fraction: f64) -> Vec<Alignment> {
    let scores: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| matching_score(x, y)).collect()).collect();
    let best = scores.iter().flatten().copied().fold(0.0, f64::max);
    let threshold = fraction * best;
    let mut out = Vec::new();
    for (k, row) in scores.iter().enumerate() {
        let mut choice: Option<(usize, f64)> = None;
        for (j, &s) in row.iter().enumerate() {
            let valid = fraction <= 0.0 || s > threshold;
            if valid && choice.is_none_or(|(_, c)| s > c) {
                choice = Some((j, s));
            }
        }
        if let Some((partner, score)) = choice {
            out.push(Alignment { topic: k, partner, score });
        }
    }
    out
}

/// Mean document frequency of one word set, overall and per language.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetFrequency {
    pub words: [Vec<usize>; 2],
    pub mean: Option<f64>,
    pub per_language: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocFrequencyReport {
    /// Words in both topics.
    pub shared: SetFrequency,
    /// Words only in the word-level (VocLink) topic.
    pub voc_only: SetFrequency,
    /// Words only in the document-level (SoftLink) topic.
    pub soft_only: SetFrequency,
}

/// Fraction of `docs` containing each word of a vocabulary of size `v`.
pub fn document_frequencies(docs: &[Document], v: usize) -> Vec<f64> {
    let mut counts = vec![0usize; v];
    let mut seen = vec![usize::MAX; v];
    for (d, doc) in docs.iter().enumerate() {
        for &w in &doc.tokens {
            if w < v && seen[w] != d {
                seen[w] = d;
                counts[w] += 1;
            }
        }
    }
    let n = docs.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Splits an aligned SoftLink/VocLink topic pair into shared and
/// model-specific words and reports their mean document frequencies in the
/// training documents.
pub fn doc_frequency_report(soft: &TopicWordSet, voc: &TopicWordSet, frequencies: [&[f64]; 2]) -> DocFrequencyReport {
    let split = |keep: &dyn Fn(bool, bool) -> bool| -> SetFrequency {
        let words = [0, 1].map(|lang| {
            let s: BTreeSet<usize> = soft.words[lang].iter().copied().collect();
            let v: BTreeSet<usize> = voc.words[lang].iter().copied().collect();
            s.union(&v).copied().filter(|w| keep(s.contains(w), v.contains(w))).collect::<Vec<_>>()
        });
        let per_language = [0, 1].map(|lang| {
            let f: Vec<f64> = words[lang].iter().map(|&w| frequencies[lang][w]).collect();
            mean(&f)
        });
        let all: Vec<f64> = (0..2)
            .flat_map(|lang| words[lang].iter().map(move |&w| frequencies[lang][w]))
            .collect();
        SetFrequency {
            mean: mean(&all),
            words,
            per_language,
        }
    };
    DocFrequencyReport {
        shared: split(&|s, v| s && v),
        voc_only: split(&|s, v| v && !s),
        soft_only: split(&|s, v| s && !v),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// `cos(P_doc, P) / cos(P_voc, P)` for one token, where `P` is the
/// normalized elementwise product of the two votes.
pub fn strength_ratio(doc_vote: &[f64], word_vote: &[f64]) -> f64 {
    let p_doc = normalized(doc_vote);
    let p_voc = normalized(word_vote);
    let p = normalized(&p_doc.iter().zip(&p_voc).map(|(a, b)| a * b).collect::<Vec<_>>());
    cosine(&p_doc, &p) / cosine(&p_voc, &p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrengthReport {
    pub tokens: usize,
    pub mean: f64,
    /// Minimum, the nine inner deciles, and maximum.
    pub deciles: Vec<f64>,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

impl StrengthReport {
    pub fn from_ratios(ratios: Vec<f64>) -> Self {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let deciles = if sorted.is_empty() {
            Vec::new()
        } else {
            (0..=10).map(|i| sorted[(i * (sorted.len() - 1)) / 10]).collect()
        };
        StrengthReport {
            tokens: ratios.len(),
            mean: mean(&ratios).unwrap_or(1.0),
            deciles,
            ratios,
        }
    }
}

/// Strength ratio of every token of both languages in the sampler's
/// current state, each computed with the token itself removed.
pub fn transfer_strength(sampler: &mut Sampler<'_>) -> StrengthReport {
    let corpus = sampler.corpus();
    let mut ratios = Vec::new();
    for lang in 0..2 {
        for (d, doc) in corpus.docs(lang).iter().enumerate() {
            for pos in 0..doc.len() {
                let votes = sampler.votes(lang, d, pos);
                ratios.push(strength_ratio(&votes.doc, &votes.word));
            }
        }
    }
    StrengthReport::from_ratios(ratios)
}
