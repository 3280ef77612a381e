//! Synthetic bilingual corpora drawn from the linked-document generative
//! story: each linked pair shares one topic mixture, and both languages
//! share topic-word distributions through a one-to-one lexicon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{pair_documents, BilingualCorpus, Document, Lexicon, Vocabulary};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub vocab: usize,
    pub pairs: usize,
    pub doc_len: usize,
    /// Held-out documents per language.
    pub heldout: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics: 4,
            vocab: 200,
            pairs: 500,
            doc_len: 50,
            heldout: 200,
            alpha: 0.1,
            beta: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: BilingualCorpus,
    /// Word `j` of side 1 translates word `j` of side 2.
    pub lexicon: Lexicon,
    /// Planted `phi[k][w]`, identical in both languages.
    pub phi: Vec<Vec<f64>>,
    /// Planted mixture of each training pair.
    pub theta: Vec<Vec<f64>>,
    /// Unlinked held-out documents per language, labeled by their dominant
    /// planted topic.
    pub heldout: [Vec<Document>; 2],
    /// Label names, `topic0..`.
    pub labels: Vec<String>,
}

pub const LANGS: [&str; 2] = ["s1", "s2"];

fn dirichlet(rng: &mut ChaCha8Rng, conc: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(conc, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

fn categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phi: Vec<Vec<f64>> = (0..cfg.topics).map(|_| dirichlet(&mut rng, cfg.beta, cfg.vocab)).collect();
    let labels: Vec<String> = (0..cfg.topics).map(|k| format!("topic{k}")).collect();

    let draw_doc = |rng: &mut ChaCha8Rng, theta: &[f64]| -> Vec<usize> {
        (0..cfg.doc_len)
            .map(|_| {
                let k = categorical(rng, theta);
                categorical(rng, &phi[k])
            })
            .collect()
    };

    let mut theta = Vec::with_capacity(cfg.pairs);
    let mut sides = [Vec::new(), Vec::new()];
    for i in 0..cfg.pairs {
        let t = dirichlet(&mut rng, cfg.alpha, cfg.topics);
        let label = vec![labels[argmax(&t)].clone()];
        for lang in 0..2 {
            let tokens = draw_doc(&mut rng, &t);
            sides[lang].push(Document {
                id: format!("{}-{i:05}", LANGS[lang]),
                lang: LANGS[lang].into(),
                tokens,
                labels: Some(label.clone()),
                link: (lang == 0).then(|| format!("{}-{i:05}", LANGS[1])),
            });
        }
        theta.push(t);
    }
    let heldout = [0, 1].map(|lang| {
        (0..cfg.heldout)
            .map(|i| {
                let t = dirichlet(&mut rng, cfg.alpha, cfg.topics);
                Document {
                    id: format!("{}-test-{i:05}", LANGS[lang]),
                    lang: LANGS[lang].into(),
                    tokens: draw_doc(&mut rng, &t),
                    labels: Some(vec![labels[argmax(&t)].clone()]),
                    link: None,
                }
            })
            .collect::<Vec<_>>()
    });

    let [s1, s2] = sides;
    let paired = pair_documents(s1, s2)?;
    let vocab = [
        Vocabulary::from_types(LANGS[0], (0..cfg.vocab).map(|j| format!("a{j}")).collect())?,
        Vocabulary::from_types(LANGS[1], (0..cfg.vocab).map(|j| format!("b{j}")).collect())?,
    ];
    Ok(SyntheticCorpus {
        corpus: BilingualCorpus { vocab, paired },
        lexicon: Lexicon::new((0..cfg.vocab).map(|j| (j, j)).collect()),
        phi,
        theta,
        heldout,
        labels,
    })
}
