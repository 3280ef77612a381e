#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mltm::corpus::{pair_documents, save_corpus, BilingualCorpus, Document, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use mltm::synthetic::{generate, SyntheticConfig, SyntheticCorpus, LANGS};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mltm"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "error").output().expect("spawn mltm")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub synthetic: SyntheticCorpus,
}

/// Writes a synthetic corpus, lexicon, held-out sets and a config file under `dir`.
pub fn fixture(dir: &Path, cfg: &SyntheticConfig, extra: &str) -> Fixture {
    let s = generate(cfg).unwrap();
    let train = dir.join("train.jsonl");
    // both languages in one file
    let mut text = Vec::new();
    for lang in 0..2 {
        let path = dir.join(format!("side{lang}.jsonl"));
        save_corpus(&path, &s.corpus.vocab[lang], s.corpus.docs(lang)).unwrap();
        text.extend(fs::read(&path).unwrap());
    }
    fs::write(&train, text).unwrap();
    for lang in 0..2 {
        save_corpus(&dir.join(format!("test{}.jsonl", lang + 1)), &s.corpus.vocab[lang], &s.heldout[lang]).unwrap();
    }
    let lexicon: String = (0..cfg.vocab).map(|j| format!("a{j}\tb{j}\n")).collect();
    fs::write(dir.join("lexicon.tsv"), lexicon).unwrap();
    let config = dir.join("config.toml");
    let labels = s.labels.join(",");
    fs::write(
        &config,
        format!(
            "side1 = \"{t}\"\nlang1 = \"{l1}\"\nlang2 = \"{l2}\"\nlexicon = \"{lex}\"\nreference = \"{t}\"\n\
             test1 = \"{t1}\"\ntest2 = \"{t2}\"\nlabels = \"{labels}\"\nfrequency_cutoff = 0\n\
             topics = {k}\n{extra}",
            t = train.display(),
            l1 = LANGS[0],
            l2 = LANGS[1],
            lex = dir.join("lexicon.tsv").display(),
            t1 = dir.join("test1.jsonl").display(),
            t2 = dir.join("test2.jsonl").display(),
            k = cfg.topics,
        ),
    )
    .unwrap();
    Fixture {
        dir: dir.to_path_buf(),
        config,
        synthetic: s,
    }
}

pub fn small() -> SyntheticConfig {
    SyntheticConfig {
        topics: 3,
        vocab: 40,
        pairs: 40,
        doc_len: 20,
        heldout: 30,
        ..SyntheticConfig::default()
    }
}

/// Random corpus of `docs` documents per side with lengths in `0..=max_len`;
/// side-1 document `i` links side-2 document `i` when `linked`.
pub fn random_corpus(seed: u64, docs: usize, v: usize, max_len: usize, linked: bool) -> BilingualCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = |lang: &str, other: Option<&str>| -> Vec<Document> {
        (0..docs)
            .map(|i| {
                let n = rng.random_range(0..=max_len);
                Document {
                    id: format!("{lang}{i}"),
                    lang: lang.into(),
                    tokens: (0..n).map(|_| rng.random_range(0..v)).collect(),
                    labels: None,
                    link: other.map(|o| format!("{o}{i}")),
                }
            })
            .collect()
    };
    let s1 = side("x", linked.then_some("y"));
    let s2 = side("y", None);
    let types = |lang: &str| (0..v).map(|w| format!("{lang}{w}")).collect();
    BilingualCorpus {
        vocab: [Vocabulary::from_types("x", types("x")).unwrap(), Vocabulary::from_types("y", types("y")).unwrap()],
        paired: pair_documents(s1, s2).unwrap(),
    }
}
