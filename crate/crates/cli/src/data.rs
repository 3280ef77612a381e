use std::path::Path;

use anyhow::{Context, Result};
use log::warn;
use mltm::corpus::{
    load_corpus_with, load_lexicon, load_with_vocabulary, pair_documents, read_stoplist, subsample_lexicon,
    subsample_links, BilingualCorpus, Document, LexiconMode, Lexicon, LexiconReport, LoadOptions, OovReport,
    Vocabulary, DEFAULT_FREQUENCY_CUTOFF,
};
use mltm::eval::ReferenceCorpus;
use serde::Serialize;

use crate::config::ConfigArgs;

#[derive(Debug, Clone, Serialize)]
pub struct DataReport {
    pub languages: [String; 2],
    pub documents: [usize; 2],
    pub tokens: [usize; 2],
    pub vocabulary: [usize; 2],
    pub links_available: usize,
    pub links_used: usize,
    pub lexicon: Option<LexiconReport>,
    pub lexicon_used: usize,
    pub empty_documents: [Vec<String>; 2],
}

/// Training corpus with every link and lexicon entry, before subsampling.
#[derive(Debug, Clone)]
pub struct FullData {
    pub corpus: BilingualCorpus,
    pub lexicon: Lexicon,
    pub lexicon_report: Option<LexiconReport>,
    pub empty_documents: [Vec<String>; 2],
}

pub struct TrainingData {
    pub corpus: BilingualCorpus,
    pub lexicon: Lexicon,
    pub report: DataReport,
}

pub fn load_full(cfg: &ConfigArgs) -> Result<FullData> {
    let langs = cfg.langs()?;
    let side1 = cfg.input("side1", &cfg.side1)?;
    let side2 = match &cfg.side2 {
        Some(_) => cfg.input("side2", &cfg.side2)?,
        None => side1.clone(),
    };
    let stoplist = match &cfg.stoplist {
        Some(_) => read_stoplist(&cfg.input("stoplist", &cfg.stoplist)?)?,
        None => Default::default(),
    };
    let options = LoadOptions {
        frequency_cutoff: cfg.frequency_cutoff.unwrap_or(DEFAULT_FREQUENCY_CUTOFF),
        stoplist,
    };
    let c1 = load_corpus_with(&side1, &langs[0], &options).with_context(|| side1.display().to_string())?;
    let c2 = load_corpus_with(&side2, &langs[1], &options).with_context(|| side2.display().to_string())?;
    let empty_documents = [c1.report.empty_documents.clone(), c2.report.empty_documents.clone()];
    let paired = pair_documents(c1.documents, c2.documents)?;
    let (lexicon, lexicon_report) = match &cfg.lexicon {
        Some(_) => {
            let path = cfg.input("lexicon", &cfg.lexicon)?;
            let (lex, report) = load_lexicon(&path, &c1.vocab, &c2.vocab).with_context(|| path.display().to_string())?;
            (lex, Some(report))
        }
        None => (Lexicon::default(), None),
    };
    Ok(FullData {
        corpus: BilingualCorpus {
            vocab: [c1.vocab, c2.vocab],
            paired,
        },
        lexicon,
        lexicon_report,
        empty_documents,
    })
}

impl FullData {
    /// Applies the link and lexicon proportions of `cfg`.
    pub fn subsample(&self, cfg: &ConfigArgs) -> Result<TrainingData> {
        let links = cfg.proportion("link_proportion", cfg.link_proportion)?;
        let lex_p = cfg.proportion("lexicon_proportion", cfg.lexicon_proportion)?;
        let seed = cfg.seed();
        let corpus = self.corpus.with_pairs(subsample_links(&self.corpus.paired, links, seed));
        let lexicon = subsample_lexicon(
            &self.lexicon,
            lex_p,
            cfg.lexicon_mode.unwrap_or(LexiconMode::Random),
            self.corpus.vocab[0].frequency(),
            self.corpus.vocab[1].frequency(),
            seed,
        );
        let report = DataReport {
            languages: [0, 1].map(|l| corpus.vocab[l].lang().to_string()),
            documents: [0, 1].map(|l| corpus.docs(l).len()),
            tokens: [0, 1].map(|l| corpus.docs(l).iter().map(Document::len).sum()),
            vocabulary: corpus.vocab_sizes(),
            links_available: self.corpus.paired.pairs.len(),
            links_used: corpus.paired.pairs.len(),
            lexicon: self.lexicon_report.clone(),
            lexicon_used: lexicon.len(),
            empty_documents: self.empty_documents.clone(),
        };
        Ok(TrainingData { corpus, lexicon, report })
    }
}

/// Documents of `lang` mapped onto a fixed vocabulary.
pub fn load_mapped(path: &Path, lang: &str, vocab: &Vocabulary) -> Result<(Vec<Document>, OovReport)> {
    let (docs, report) = load_with_vocabulary(path, lang, vocab).with_context(|| path.display().to_string())?;
    if report.dropped_tokens > 0 {
        warn!(
            "{}: dropped {} of {} tokens outside the model vocabulary",
            path.display(),
            report.dropped_tokens,
            report.tokens
        );
    }
    Ok((docs, report))
}

pub fn load_reference(path: &Path, langs: &[String; 2], vocab: [&Vocabulary; 2]) -> Result<ReferenceCorpus> {
    let (d1, _) = load_mapped(path, &langs[0], vocab[0])?;
    let (d2, _) = load_mapped(path, &langs[1], vocab[1])?;
    let paired = pair_documents(d1, d2).with_context(|| path.display().to_string())?;
    Ok(ReferenceCorpus::from_paired(&paired, [vocab[0].len(), vocab[1].len()])?)
}
