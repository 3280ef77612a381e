//! Crosslingual document classification on document-topic features.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::Document;
use crate::error::{Error, Result};

pub const DEFAULT_LABELS: [&str; 3] = ["technology", "culture", "science"];
pub const DEFAULT_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSet {
    pub universe: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Indices into `universe`, ascending.
    pub labels: Vec<Vec<usize>>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> FeatureSet {
        FeatureSet {
            universe: self.universe.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

pub fn default_universe() -> Vec<String> {
    DEFAULT_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Pairs each labeled, non-empty document with its topic proportions.
/// Labels outside the universe are dropped; documents left without labels
/// are excluded.
pub fn export_features(theta: &[Vec<f64>], docs: &[Document], universe: &[String]) -> Result<FeatureSet> {
    if theta.len() != docs.len() {
        return Err(Error::Shape(format!(
            "{} topic rows for {} documents",
            theta.len(),
            docs.len()
        )));
    }
    let mut out = FeatureSet {
        universe: universe.to_vec(),
        ids: Vec::new(),
        rows: Vec::new(),
        labels: Vec::new(),
    };
    for (row, doc) in theta.iter().zip(docs) {
        let Some(labels) = &doc.labels else { continue };
        let mut idx: Vec<usize> = labels
            .iter()
            .filter_map(|l| universe.iter().position(|u| u == l))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() || doc.is_empty() {
            continue;
        }
        out.ids.push(doc.id.clone());
        out.rows.push(row.clone());
        out.labels.push(idx);
    }
    if out.is_empty() {
        return Err(Error::Invalid("no labeled documents within the label universe".into()));
    }
    Ok(out)
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..9).contains(&exp) {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{x:.*}", (8 - exp) as usize))
    }
}

/// Writes `id`, `t0..t{K-1}`, `labels` columns.
pub fn write_features_tsv<W: Write>(out: &mut W, features: &FeatureSet) -> std::io::Result<()> {
    let k = features.dim();
    write!(out, "id")?;
    for t in 0..k {
        write!(out, "\tt{t}")?;
    }
    writeln!(out, "\tlabels")?;
    for ((id, row), labels) in features.ids.iter().zip(&features.rows).zip(&features.labels) {
        write!(out, "{id}")?;
        for x in row {
            write!(out, "\t{}", format_sig9(*x))?;
        }
        let names: Vec<&str> = labels.iter().map(|&l| features.universe[l].as_str()).collect();
        writeln!(out, "\t{}", names.join(";"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierConfig {
    pub folds: usize,
    /// Candidate values of `C = 1 / lambda`.
    pub grid: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            folds: 5,
            grid: DEFAULT_GRID.to_vec(),
            epochs: 300,
            seed: 0,
        }
    }
}

/// How a label's scorer decides when training data fixes the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Linear,
    AlwaysNegative,
    AlwaysPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearClassifier {
    pub universe: Vec<String>,
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub kinds: Vec<ScorerKind>,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// L2-regularized hinge loss, full-batch subgradient descent with step
/// `1 / (lambda t)`. The bias is not regularized.
fn train_binary(rows: &[Vec<f64>], y: &[f64], lambda: f64, epochs: usize) -> (Vec<f64>, f64) {
    let dim = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut gw = vec![0.0; dim];
    for t in 1..=epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &yi) in rows.iter().zip(y) {
            let margin = yi * (dot(&w, x) + b);
            if margin < 1.0 {
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g -= yi * xi;
                }
                gb -= yi;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= eta * (lambda * *wj + g / n);
        }
        b -= eta * gb / n;
    }
    (w, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-vs-rest scorers with a fixed regularization value.
pub fn fit(train: &FeatureSet, c: f64, epochs: usize, seed: u64) -> LinearClassifier {
    let dim = train.dim();
    let mut clf = LinearClassifier {
        universe: train.universe.clone(),
        dim,
        weights: Vec::new(),
        bias: Vec::new(),
        kinds: Vec::new(),
        c,
        epochs,
        seed,
    };
    for label in 0..train.universe.len() {
        let y: Vec<f64> = train
            .labels
            .iter()
            .map(|ls| if ls.contains(&label) { 1.0 } else { -1.0 })
            .collect();
        let positives = y.iter().filter(|&&v| v > 0.0).count();
        let kind = if positives == 0 {
            ScorerKind::AlwaysNegative
        } else if positives == y.len() {
            ScorerKind::AlwaysPositive
        } else {
            ScorerKind::Linear
        };
        let (w, b) = match kind {
            ScorerKind::Linear => train_binary(&train.rows, &y, 1.0 / c, epochs),
            _ => (vec![0.0; dim], 0.0),
        };
        clf.weights.push(w);
        clf.bias.push(b);
        clf.kinds.push(kind);
    }
    clf
}

/// Fold index of every row, stratified by the row's most frequent label.
pub fn stratified_folds(labels: &[Vec<usize>], universe: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut freq = vec![0usize; universe];
    for ls in labels {
        for &l in ls {
            freq[l] += 1;
        }
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ls) in labels.iter().enumerate() {
        let key = ls
            .iter()
            .copied()
            .max_by(|&a, &b| freq[a].cmp(&freq[b]).then(b.cmp(&a)))
            .unwrap_or(universe);
        strata.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for rows in strata.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridScore {
    pub c: f64,
    pub micro_f1: f64,
    pub fold_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingReport {
    pub chosen_c: f64,
    pub grid: Vec<GridScore>,
}

/// Chooses `C` by cross-validated micro-F1 on the training rows, then refits
/// on all of them. Ties go to the earlier grid value.
pub fn train_classifier(train: &FeatureSet, config: &ClassifierConfig) -> Result<(LinearClassifier, TrainingReport)> {
    if config.folds < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {}", config.folds)));
    }
    if train.is_empty() {
        return Err(Error::Invalid("no training rows".into()));
    }
    if config.grid.is_empty() || config.grid.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Hyperparameter("regularization grid must be nonempty and positive".into()));
    }
    for (label, name) in train.universe.iter().enumerate() {
        if !train.labels.iter().any(|ls| ls.contains(&label)) {
            log::warn!("label `{name}` has no positive training rows; it will never be predicted");
        }
    }
    let fold = stratified_folds(&train.labels, train.universe.len(), config.folds, config.seed);
    let folds = config.folds.min(train.len());
    let mut grid = Vec::new();
    for &c in &config.grid {
        let mut pooled = Counts::default();
        let mut fold_f1 = Vec::new();
        for f in 0..folds {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| fold[i] == f);
            if test_idx.is_empty() || train_idx.is_empty() {
                continue;
            }
            let clf = fit(&train.subset(&train_idx), c, config.epochs, config.seed);
            let held = train.subset(&test_idx);
            let pred = predict(&clf, &held.rows)?;
            let counts = Counts::of(&pred, &held.labels);
            fold_f1.push(counts.f1());
            pooled.add(&counts);
        }
        grid.push(GridScore {
            c,
            micro_f1: pooled.f1(),
            fold_f1,
        });
    }
    let best = grid
        .iter()
        .enumerate()
        .fold(0, |best, (i, g)| if g.micro_f1 > grid[best].micro_f1 { i } else { best });
    let chosen_c = grid[best].c;
    Ok((
        fit(train, chosen_c, config.epochs, config.seed),
        TrainingReport { chosen_c, grid },
    ))
}

/// Margins of every scorer for one row.
pub fn margins(clf: &LinearClassifier, row: &[f64]) -> Vec<f64> {
    (0..clf.universe.len())
        .map(|l| match clf.kinds[l] {
            ScorerKind::Linear => dot(&clf.weights[l], row) + clf.bias[l],
            ScorerKind::AlwaysNegative => -1.0,
            ScorerKind::AlwaysPositive => 1.0,
        })
        .collect()
}

/// Labels whose margin is strictly positive.
pub fn predict(clf: &LinearClassifier, rows: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    rows.iter()
        .map(|row| {
            if row.len() != clf.dim {
                return Err(Error::Shape(format!(
                    "classifier expects {} features, got {}",
                    clf.dim,
                    row.len()
                )));
            }
            Ok(margins(clf, row)
                .into_iter()
                .enumerate()
                .filter(|&(_, m)| m > 0.0)
                .map(|(l, _)| l)
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
}

impl Counts {
    pub fn of(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> Counts {
        let mut c = Counts::default();
        for (p, g) in predicted.iter().zip(gold) {
            let tp = p.iter().filter(|l| g.contains(l)).count();
            c.tp += tp;
            c.fp += p.len() - tp;
            c.r#fn += g.iter().filter(|l| !p.contains(l)).count();
        }
        c
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.r#fn += o.r#fn;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Micro-averaged F1 over all (row, label) decisions.
pub fn micro_f1(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> f64 {
    Counts::of(predicted, gold).f1()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn per_label(predicted: &[Vec<usize>], gold: &[Vec<usize>], universe: &[String]) -> Vec<LabelMetrics> {
    universe
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let only = |sets: &[Vec<usize>]| -> Vec<Vec<usize>> {
                sets.iter().map(|s| s.iter().copied().filter(|&x| x == l).collect()).collect()
            };
            let c = Counts::of(&only(predicted), &only(gold));
            LabelMetrics {
                label: name.clone(),
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                support: c.tp + c.r#fn,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_matches_printf() {
        assert_eq!(format_sig9(0.25), "0.25");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig9(123456789.0), "123456789");
        assert_eq!(format_sig9(1234567890.0), "1.23456789e+09");
        assert_eq!(format_sig9(0.0001), "0.0001");
        assert_eq!(format_sig9(0.00001234), "1.234e-05");
        assert_eq!(format_sig9(-1.5), "-1.5");
        assert_eq!(format_sig9(1.0), "1");
    }

    #[test]
    fn f1_fixtures() {
        let gold = vec![vec![0], vec![1], vec![0, 1]];
        assert_eq!(micro_f1(&gold, &gold), 1.0);
        // TP = 2, FP = 1, FN = 1
        let pred = vec![vec![0], vec![0], vec![1]];
        let c = Counts::of(&pred, &gold);
        assert_eq!((c.tp, c.fp, c.r#fn), (2, 1, 2));
        let pred = vec![vec![0], vec![0], vec![0, 1]];
        let gold = vec![vec![0], vec![1], vec![0]];
        let c = Counts::of(&pred, &gold);
        assert_eq!((c.tp, c.fp, c.r#fn), (2, 2, 1));
        let pred = vec![vec![0], vec![0], vec![1]];
        let gold = vec![vec![0], vec![1], vec![1]];
        let c = Counts::of(&pred, &gold);
        assert_eq!((c.tp, c.fp, c.r#fn), (2, 1, 1));
        assert!((micro_f1(&pred, &gold) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(micro_f1(&[vec![], vec![]], &[vec![0], vec![]]), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let clf = LinearClassifier {
            universe: vec!["a".into(), "b".into(), "c".into()],
            dim: 1,
            weights: vec![vec![1.0], vec![-1.0], vec![0.5]],
            bias: vec![0.0; 3],
            kinds: vec![ScorerKind::Linear; 3],
            c: 1.0,
            epochs: 0,
            seed: 0,
        };
        assert_eq!(predict(&clf, &[vec![1.0]]).unwrap(), vec![vec![0, 2]]);
        assert_eq!(predict(&clf, &[vec![0.0]]).unwrap(), vec![Vec::<usize>::new()]);
        assert!(predict(&clf, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn folds_are_balanced_within_strata() {
        let labels: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 2]).collect();
        let fold = stratified_folds(&labels, 2, 5, 7);
        for f in 0..5 {
            let members: Vec<usize> = (0..20).filter(|&i| fold[i] == f).collect();
            assert_eq!(members.len(), 4);
            assert_eq!(members.iter().filter(|&&i| i % 2 == 0).count(), 2);
        }
    }
}
