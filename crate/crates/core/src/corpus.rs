//! Corpus and lexicon ingestion.
//!
//! Corpora are UTF-8 JSON Lines files with one document per line:
//! `{"id": .., "lang": .., "tokens": [..], "labels": [..]?, "link": ..?}`.
//! Tokens are already segmented; the loader only drops stopwords and the most
//! frequent raw types, then re-indexes every document against the surviving
//! vocabulary. Lexicons are two-column TSV files of `source<TAB>target` pairs.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of most frequent raw types removed per language unless configured otherwise.
pub const DEFAULT_FREQUENCY_CUTOFF: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    lang: String,
    types: Vec<String>,
    frequency: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(lang: impl Into<String>, types: Vec<String>, frequency: Vec<u64>) -> Result<Self> {
        if types.len() != frequency.len() {
            return Err(Error::Shape(format!(
                "{} types but {} frequencies",
                types.len(),
                frequency.len()
            )));
        }
        let mut index = HashMap::with_capacity(types.len());
        for (i, t) in types.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary type `{t}`")));
            }
        }
        Ok(Vocabulary {
            lang: lang.into(),
            types,
            frequency,
            index,
        })
    }

    /// A vocabulary without frequency information, e.g. rebuilt from a model file.
    pub fn from_types(lang: impl Into<String>, types: Vec<String>) -> Result<Self> {
        let n = types.len();
        Self::new(lang, types, vec![0; n])
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn word(&self, index: usize) -> &str {
        &self.types[index]
    }

    pub fn frequency(&self) -> &[u64] {
        &self.frequency
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: String,
    pub tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawDocument {
    id: String,
    lang: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// How many of the most frequent raw types to drop; 0 disables the cut.
    pub frequency_cutoff: usize,
    pub stoplist: HashSet<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            frequency_cutoff: DEFAULT_FREQUENCY_CUTOFF,
            stoplist: HashSet::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub documents: usize,
    pub raw_tokens: usize,
    pub kept_tokens: usize,
    pub raw_types: usize,
    pub stopword_types: usize,
    pub frequent_types: Vec<String>,
    /// Ids of documents left with no tokens after filtering.
    pub empty_documents: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub vocab: Vocabulary,
    pub documents: Vec<Document>,
    pub report: LoadReport,
}

pub fn read_stoplist(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Loads the documents of language `lang` from a JSON Lines corpus, removing
/// the stoplist and the default number of most frequent types.
pub fn load_corpus(path: &Path, lang: &str, stoplist: Option<&Path>) -> Result<LoadedCorpus> {
    let mut options = LoadOptions::default();
    if let Some(p) = stoplist {
        options.stoplist = read_stoplist(p)?;
    }
    load_corpus_with(path, lang, &options)
}

pub fn load_corpus_with(path: &Path, lang: &str, options: &LoadOptions) -> Result<LoadedCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), lang, options)
}

fn read_raw_documents<R: Read>(reader: R, lang: &str) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.lang != lang {
            continue;
        }
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        docs.push(raw);
    }
    Ok(docs)
}

pub fn parse_corpus<R: Read>(reader: R, lang: &str, options: &LoadOptions) -> Result<LoadedCorpus> {
    if lang.is_empty() {
        return Err(Error::Invalid("language code must be nonempty".into()));
    }
    let raw = read_raw_documents(reader, lang)?;

    // raw type counts in first-appearance order
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut raw_tokens = 0;
    for doc in &raw {
        raw_tokens += doc.tokens.len();
        for t in &doc.tokens {
            let c = counts.entry(t.as_str()).or_insert_with(|| {
                order.push(t.as_str());
                0
            });
            *c += 1;
        }
    }

    let mut by_freq: Vec<usize> = (0..order.len()).collect();
    by_freq.sort_by(|&a, &b| counts[order[b]].cmp(&counts[order[a]]).then(a.cmp(&b)));
    let frequent: Vec<String> = by_freq
        .iter()
        .take(options.frequency_cutoff)
        .map(|&i| order[i].to_owned())
        .collect();
    let frequent_set: HashSet<&str> = frequent.iter().map(String::as_str).collect();

    let mut stopword_types = 0;
    let mut types = Vec::new();
    let mut frequency = Vec::new();
    for &t in &order {
        if options.stoplist.contains(t) {
            stopword_types += 1;
            continue;
        }
        if frequent_set.contains(t) {
            continue;
        }
        types.push(t.to_owned());
        frequency.push(counts[t]);
    }
    let vocab = Vocabulary::new(lang, types, frequency)?;

    let mut report = LoadReport {
        documents: raw.len(),
        raw_tokens,
        raw_types: order.len(),
        stopword_types,
        frequent_types: frequent,
        ..Default::default()
    };
    let documents: Vec<Document> = raw
        .into_iter()
        .map(|r| {
            let tokens: Vec<usize> = r.tokens.iter().filter_map(|t| vocab.index_of(t)).collect();
            Document {
                id: r.id,
                lang: r.lang,
                tokens,
                labels: r.labels,
                link: r.link,
            }
        })
        .collect();
    for d in &documents {
        report.kept_tokens += d.len();
        if d.is_empty() {
            report.empty_documents.push(d.id.clone());
        }
    }
    if !report.empty_documents.is_empty() {
        warn!(
            "{} of {} `{}` documents are empty after preprocessing",
            report.empty_documents.len(),
            report.documents,
            lang
        );
    }
    Ok(LoadedCorpus {
        vocab,
        documents,
        report,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OovReport {
    pub documents: usize,
    pub tokens: usize,
    pub dropped_tokens: usize,
    pub empty_documents: Vec<String>,
}

/// Loads documents of `lang` against a fixed vocabulary (held-out and
/// reference corpora). Out-of-vocabulary tokens are dropped and counted.
pub fn load_with_vocabulary(
    path: &Path,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<(Vec<Document>, OovReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_with_vocabulary(BufReader::new(file), lang, vocab)
}

pub fn parse_with_vocabulary<R: Read>(
    reader: R,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<(Vec<Document>, OovReport)> {
    let raw = read_raw_documents(reader, lang)?;
    let mut report = OovReport {
        documents: raw.len(),
        ..Default::default()
    };
    let docs = raw
        .into_iter()
        .map(|r| {
            report.tokens += r.tokens.len();
            let tokens: Vec<usize> = r.tokens.iter().filter_map(|t| vocab.index_of(t)).collect();
            report.dropped_tokens += r.tokens.len() - tokens.len();
            if tokens.is_empty() {
                report.empty_documents.push(r.id.clone());
            }
            Document {
                id: r.id,
                lang: r.lang,
                tokens,
                labels: r.labels,
                link: r.link,
            }
        })
        .collect();
    Ok((docs, report))
}

/// Writes documents back out as JSON Lines with token strings.
pub fn save_corpus(path: &Path, vocab: &Vocabulary, docs: &[Document]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus(&mut out, vocab, docs)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus<W: Write>(out: &mut W, vocab: &Vocabulary, docs: &[Document]) -> Result<()> {
    for d in docs {
        let raw = RawDocument {
            id: d.id.clone(),
            lang: d.lang.clone(),
            tokens: d.tokens.iter().map(|&t| vocab.word(t).to_owned()).collect(),
            labels: d.labels.clone(),
            link: d.link.clone(),
        };
        serde_json::to_writer(&mut *out, &raw)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<corpus output>", e))?;
    }
    Ok(())
}

/// Two sides of a bilingual corpus plus the resolved document links.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    pub side1: Vec<Document>,
    pub side2: Vec<Document>,
    /// (side1 index, side2 index), sorted by side1 index.
    pub pairs: Vec<(usize, usize)>,
}

impl PairedCorpus {
    pub fn side(&self, lang: usize) -> &[Document] {
        match lang {
            0 => &self.side1,
            _ => &self.side2,
        }
    }

    /// For each document of `lang`, the index of its linked counterpart.
    pub fn counterparts(&self, lang: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; self.side(lang).len()];
        for &(a, b) in &self.pairs {
            if lang == 0 {
                out[a] = Some(b);
            } else {
                out[b] = Some(a);
            }
        }
        out
    }
}

/// Resolves `link` ids into index pairs. Links may be declared on either side
/// (or both, if they agree).
pub fn pair_documents(side1: Vec<Document>, side2: Vec<Document>) -> Result<PairedCorpus> {
    let index1: HashMap<&str, usize> = side1.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let index2: HashMap<&str, usize> = side2.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();

    let mut dangling = Vec::new();
    let mut partner1: Vec<Option<usize>> = vec![None; side1.len()];
    let mut partner2: Vec<Option<usize>> = vec![None; side2.len()];
    let link = |a: usize, b: usize, p1: &mut Vec<Option<usize>>, p2: &mut Vec<Option<usize>>| -> Result<()> {
        match (p1[a], p2[b]) {
            (Some(x), _) if x != b => Err(Error::ConflictingLink(side1[a].id.clone())),
            (_, Some(y)) if y != a => Err(Error::ConflictingLink(side2[b].id.clone())),
            _ => {
                p1[a] = Some(b);
                p2[b] = Some(a);
                Ok(())
            }
        }
    };
    for (a, d) in side1.iter().enumerate() {
        if let Some(target) = &d.link {
            match index2.get(target.as_str()) {
                Some(&b) => link(a, b, &mut partner1, &mut partner2)?,
                None => dangling.push(format!("{} -> {}", d.id, target)),
            }
        }
    }
    for (b, d) in side2.iter().enumerate() {
        if let Some(target) = &d.link {
            match index1.get(target.as_str()) {
                Some(&a) => link(a, b, &mut partner1, &mut partner2)?,
                None => dangling.push(format!("{} -> {}", d.id, target)),
            }
        }
    }
    if !dangling.is_empty() {
        return Err(Error::DanglingLinks(dangling));
    }
    let pairs = partner1
        .iter()
        .enumerate()
        .filter_map(|(a, b)| b.map(|b| (a, b)))
        .collect();
    Ok(PairedCorpus { side1, side2, pairs })
}

fn prefix_len(proportion: f64, n: usize) -> usize {
    ((proportion.clamp(0.0, 1.0) * n as f64).round() as usize).min(n)
}

/// Keeps `round(proportion * |pairs|)` links. One permutation is drawn per
/// seed and prefixes are taken, so the retained sets are nested in `proportion`.
pub fn subsample_links(paired: &PairedCorpus, proportion: f64, seed: u64) -> PairedCorpus {
    let mut order: Vec<usize> = (0..paired.pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep = prefix_len(proportion, order.len());
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    PairedCorpus {
        side1: paired.side1.clone(),
        side2: paired.side2.clone(),
        pairs: kept.into_iter().map(|i| paired.pairs[i]).collect(),
    }
}

/// Both vocabularies together with the paired documents.
#[derive(Debug, Clone)]
pub struct BilingualCorpus {
    pub vocab: [Vocabulary; 2],
    pub paired: PairedCorpus,
}

impl BilingualCorpus {
    pub fn vocab_sizes(&self) -> [usize; 2] {
        [self.vocab[0].len(), self.vocab[1].len()]
    }

    pub fn docs(&self, lang: usize) -> &[Document] {
        self.paired.side(lang)
    }

    pub fn with_pairs(&self, paired: PairedCorpus) -> BilingualCorpus {
        BilingualCorpus {
            vocab: self.vocab.clone(),
            paired,
        }
    }
}

/// Bilingual translation pairs, as (side1 word index, side2 word index).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<(usize, usize)>,
}

impl Lexicon {
    /// Sorts and deduplicates the entries.
    pub fn new(mut entries: Vec<(usize, usize)>) -> Self {
        entries.sort_unstable();
        entries.dedup();
        Lexicon { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LexiconReport {
    pub raw_entries: usize,
    pub retained: usize,
    pub out_of_vocabulary: usize,
    pub duplicates: usize,
}

pub fn load_lexicon(
    path: &Path,
    vocab1: &Vocabulary,
    vocab2: &Vocabulary,
) -> Result<(Lexicon, LexiconReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(BufReader::new(file), vocab1, vocab2)
}

pub fn parse_lexicon<R: Read>(
    reader: R,
    vocab1: &Vocabulary,
    vocab2: &Vocabulary,
) -> Result<(Lexicon, LexiconReport)> {
    let mut report = LexiconReport::default();
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `source<TAB>target`, got {} column(s)", cols.len()),
            });
        }
        report.raw_entries += 1;
        match (vocab1.index_of(cols[0]), vocab2.index_of(cols[1])) {
            (Some(a), Some(b)) => entries.push((a, b)),
            _ => report.out_of_vocabulary += 1,
        }
    }
    let before = entries.len();
    let lexicon = Lexicon::new(entries);
    report.duplicates = before - lexicon.len();
    report.retained = lexicon.len();
    if report.raw_entries == 0 {
        warn!("lexicon is empty");
    }
    Ok((lexicon, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconMode {
    Random,
    Frequency,
}

impl std::str::FromStr for LexiconMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(LexiconMode::Random),
            "frequency" => Ok(LexiconMode::Frequency),
            other => Err(Error::Invalid(format!("unknown lexicon mode `{other}`"))),
        }
    }
}

/// Keeps `round(proportion * |entries|)` entries, either uniformly at random
/// or the ones whose more frequent side has the highest corpus frequency.
pub fn subsample_lexicon(
    lex: &Lexicon,
    proportion: f64,
    mode: LexiconMode,
    freq1: &[u64],
    freq2: &[u64],
    seed: u64,
) -> Lexicon {
    let keep = prefix_len(proportion, lex.len());
    let mut order: Vec<usize> = (0..lex.len()).collect();
    match mode {
        LexiconMode::Random => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        LexiconMode::Frequency => {
            let score = |i: usize| {
                let (a, b) = lex.entries[i];
                freq1[a].max(freq2[b])
            };
            order.sort_by(|&x, &y| score(y).cmp(&score(x)).then(x.cmp(&y)));
        }
    }
    Lexicon::new(order[..keep].iter().map(|&i| lex.entries[i]).collect())
}
