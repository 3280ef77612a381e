use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use log::warn;
use mltm::classify::{
    export_features, format_sig9, per_label, predict, train_classifier, write_features_tsv, ClassifierConfig,
    Counts, FeatureSet, GridScore, LabelMetrics,
};
use mltm::corpus::BilingualCorpus;
use mltm::eval::{
    align_topics, doc_frequency_report, document_frequencies, mean, model_coherence, stdev, top_words,
    transfer_strength, Alignment, DocFrequencyReport, ReferenceCorpus, DEFAULT_VALIDITY_FRACTION,
};
use mltm::sampler::{
    derive_seed, infer as infer_docs, train_chain, Checkpoint, Hyperparameters, ModelKind, Sampler,
    Supervision, TrainedModel,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{existing, ConfigArgs};
use crate::data::{load_full, load_mapped, load_reference, DataReport, FullData};
use crate::Usage;

pub const SCHEMA: u32 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &ConfigArgs) -> Result<PathBuf> {
    let dir = cfg.out();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct ChainSummary {
    chain: usize,
    seed: u64,
    model_file: String,
    state_file: String,
    checksum: String,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    schema: u32,
    model: ModelKind,
    hyperparameters: &'a Hyperparameters,
    data: &'a DataReport,
    supervision: String,
    chains: Vec<ChainSummary>,
}

#[derive(Serialize)]
struct Timing {
    schema: u32,
    elapsed_ms: Vec<u128>,
}

struct Trained {
    model: TrainedModel,
    checkpoint: Checkpoint,
    elapsed_ms: u128,
}

fn train_chains(
    kind: ModelKind,
    corpus: &BilingualCorpus,
    supervision: &Supervision,
    hyper: &Hyperparameters,
    diagnostics: bool,
    jobs: usize,
) -> Result<Vec<Trained>> {
    let run = |chain: usize| -> Result<Trained> {
        let start = Instant::now();
        let (model, checkpoint) = train_chain(kind, corpus, supervision, hyper, chain, diagnostics)?;
        Ok(Trained {
            model,
            checkpoint,
            elapsed_ms: start.elapsed().as_millis(),
        })
    };
    if jobs <= 1 {
        return (0..hyper.chains).map(run).collect();
    }
    pool(jobs)?.install(|| (0..hyper.chains).into_par_iter().map(run).collect())
}

pub fn train(cfg: &ConfigArgs) -> Result<()> {
    let kind = cfg.model()?;
    let hyper = cfg.hyper()?;
    let data = load_full(cfg)?.subsample(cfg)?;
    let supervision = Supervision::build(kind, &data.corpus, &data.lexicon, &hyper)?;
    let out = out_dir(cfg)?;
    let trained = train_chains(
        kind,
        &data.corpus,
        &supervision,
        &hyper,
        cfg.diagnostics.unwrap_or(false),
        cfg.jobs(),
    )?;
    let mut chains = Vec::new();
    for t in &trained {
        let c = t.model.chain;
        let model_file = format!("chain-{c}.model.json");
        let state_file = format!("chain-{c}.state.json");
        t.model.save(&out.join(&model_file))?;
        t.checkpoint.save(&out.join(&state_file))?;
        chains.push(ChainSummary {
            chain: c,
            seed: t.model.seed,
            model_file,
            state_file,
            checksum: t.checkpoint.checksum(),
        });
    }
    write_json(
        &out.join("train.json"),
        &TrainReport {
            schema: SCHEMA,
            model: kind,
            hyperparameters: &hyper,
            data: &data.report,
            supervision: supervision.fingerprint(),
            chains,
        },
    )?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            schema: SCHEMA,
            elapsed_ms: trained.iter().map(|t| t.elapsed_ms).collect(),
        },
    )
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    existing(path)?;
    TrainedModel::load(path).with_context(|| path.display().to_string())
}

#[derive(Serialize)]
struct InferredDocument<'a> {
    id: &'a str,
    theta: &'a [f64],
}

pub fn infer(cfg: &ConfigArgs, model_path: &Path, input: &Path, lang: &str) -> Result<()> {
    let model = load_model(model_path)?;
    existing(input)?;
    let side = model
        .lang_index(lang)
        .ok_or_else(|| Usage(format!("model has no language `{lang}`")))?;
    let vocab = model.vocabulary(side)?;
    let (docs, oov) = load_mapped(input, lang, &vocab)?;
    let sweeps = cfg.infer_sweeps.unwrap_or(model.hyper.infer_sweeps);
    let result = infer_docs(&model, side, &docs, sweeps, cfg.seed())?;
    let documents: Vec<InferredDocument> = docs
        .iter()
        .zip(&result.theta)
        .map(|(d, t)| InferredDocument { id: &d.id, theta: t })
        .collect();
    let out = out_dir(cfg)?;
    write_json(
        &out.join("infer.json"),
        &serde_json::json!({
            "schema": SCHEMA,
            "model": model.kind,
            "lang": lang,
            "sweeps": sweeps,
            "out_of_vocabulary": oov,
            "uniform_documents": result.empty,
            "documents": documents,
        }),
    )
}

/// Models loaded from files, checked to share vocabularies and topic count.
fn load_models(paths: &[PathBuf]) -> Result<Vec<TrainedModel>> {
    let models: Vec<TrainedModel> = paths.iter().map(|p| load_model(p)).collect::<Result<_>>()?;
    if let Some(first) = models.first() {
        for (m, p) in models.iter().zip(paths).skip(1) {
            if m.vocab_hash != first.vocab_hash || m.languages != first.languages {
                bail!(Usage(format!("{}: vocabulary differs from {}", p.display(), paths[0].display())));
            }
            if m.topics() != first.topics() {
                bail!(Usage(format!("{}: {} topics, expected {}", p.display(), m.topics(), first.topics())));
            }
        }
    }
    Ok(models)
}

fn reference_for(cfg: &ConfigArgs, model: &TrainedModel) -> Result<ReferenceCorpus> {
    let path = cfg.input("reference", &cfg.reference)?;
    let vocab = [model.vocabulary(0)?, model.vocabulary(1)?];
    load_reference(&path, &model.languages, [&vocab[0], &vocab[1]])
}

#[derive(Serialize)]
struct ChainCoherence {
    model_file: String,
    chain: usize,
    topics: Vec<f64>,
    mean: f64,
    uncovered: [usize; 2],
}

pub fn eval(cfg: &ConfigArgs, paths: &[PathBuf]) -> Result<()> {
    let models = load_models(paths)?;
    let reference = reference_for(cfg, &models[0])?;
    let c = cfg.top_words();
    let chains: Vec<ChainCoherence> = models
        .iter()
        .zip(paths)
        .map(|(m, p)| {
            let coh = model_coherence(m, &reference, c);
            ChainCoherence {
                model_file: file_name(p),
                chain: m.chain,
                topics: coh.topics,
                mean: coh.mean,
                uncovered: coh.uncovered,
            }
        })
        .collect();
    let means: Vec<f64> = chains.iter().map(|c| c.mean).collect();
    let out = out_dir(cfg)?;
    write_json(
        &out.join("eval.json"),
        &serde_json::json!({
            "schema": SCHEMA,
            "model": models[0].kind,
            "top_words": c,
            "reference_pairs": reference.len(),
            "chains": chains,
            "mean": mean(&means),
            "stdev": stdev(&means),
        }),
    )
}

#[derive(Serialize)]
struct ClassifyReport {
    schema: u32,
    model: ModelKind,
    labels: Vec<String>,
    train_rows: usize,
    test_rows: usize,
    chosen_c: f64,
    grid: Vec<GridScore>,
    micro_f1: f64,
    counts: Counts,
    per_label: Vec<LabelMetrics>,
}

/// Infers both test sides with `model`, trains on side 1 and tests on side 2.
fn classify_with(cfg: &ConfigArgs, model: &TrainedModel, seed: u64) -> Result<(ClassifyReport, [FeatureSet; 2])> {
    let paths = [cfg.input("test1", &cfg.test1)?, cfg.input("test2", &cfg.test2)?];
    let universe = cfg.label_universe();
    let sweeps = cfg.infer_sweeps.unwrap_or(model.hyper.infer_sweeps);
    let mut features = Vec::new();
    for side in 0..2 {
        let vocab = model.vocabulary(side)?;
        let (docs, _) = load_mapped(&paths[side], &model.languages[side], &vocab)?;
        let inferred = infer_docs(model, side, &docs, sweeps, derive_seed(seed, 1000 + side as u64))?;
        let fs = export_features(&inferred.theta, &docs, &universe)
            .map_err(|e| Usage(format!("{}: {e}", paths[side].display())))?;
        features.push(fs);
    }
    let [train, test]: [FeatureSet; 2] = features.try_into().expect("two sides");
    let config = ClassifierConfig {
        folds: cfg.folds.unwrap_or(5),
        seed,
        ..ClassifierConfig::default()
    };
    let (clf, training) = train_classifier(&train, &config)?;
    let predicted = predict(&clf, &test.rows)?;
    let counts = Counts::of(&predicted, &test.labels);
    let report = ClassifyReport {
        schema: SCHEMA,
        model: model.kind,
        labels: universe.clone(),
        train_rows: train.len(),
        test_rows: test.len(),
        chosen_c: training.chosen_c,
        grid: training.grid,
        micro_f1: counts.f1(),
        counts,
        per_label: per_label(&predicted, &test.labels, &universe),
    };
    Ok((report, [train, test]))
}

pub fn classify(cfg: &ConfigArgs, model_path: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let (report, features) = classify_with(cfg, &model, cfg.seed())?;
    let out = out_dir(cfg)?;
    for (side, fs) in features.iter().enumerate() {
        let path = out.join(format!("features-side{}.tsv", side + 1));
        let mut buf = Vec::new();
        write_features_tsv(&mut buf, fs)?;
        fs::write(&path, buf).with_context(|| path.display().to_string())?;
    }
    write_json(&out.join("classify.json"), &report)
}

#[derive(Serialize)]
struct AlignedFrequency {
    soft_topic: usize,
    voc_topic: usize,
    report: DocFrequencyReport,
}

pub fn align(cfg: &ConfigArgs, a: &Path, b: &Path) -> Result<()> {
    let models = load_models(&[a.to_path_buf(), b.to_path_buf()]).map_err(|e| {
        if e.to_string().contains("topics") {
            e.context("cannot align models with different topic counts")
        } else {
            e
        }
    })?;
    let c = cfg.top_words();
    let fraction = cfg.validity_fraction.unwrap_or(DEFAULT_VALIDITY_FRACTION);
    let alignments: Vec<Alignment> = align_topics(&models[0], &models[1], c, fraction)?;

    let mut frequencies = Vec::new();
    let order = match (models[0].kind, models[1].kind) {
        (ModelKind::SoftLink, ModelKind::VocLink) => Some(false),
        (ModelKind::VocLink, ModelKind::SoftLink) => Some(true),
        _ => None,
    };
    if let (Some(swapped), Some(_)) = (order, &cfg.side1) {
        let side1 = cfg.input("side1", &cfg.side1)?;
        let side2 = match &cfg.side2 {
            Some(_) => cfg.input("side2", &cfg.side2)?,
            None => side1.clone(),
        };
        let m = &models[0];
        let freq: Vec<Vec<f64>> = [side1, side2]
            .iter()
            .enumerate()
            .map(|(lang, path)| {
                let vocab = m.vocabulary(lang)?;
                let (docs, _) = load_mapped(path, &m.languages[lang], &vocab)?;
                Ok(document_frequencies(&docs, vocab.len()))
            })
            .collect::<Result<_>>()?;
        for al in &alignments {
            let (ta, tb) = (top_words(&models[0], al.topic, c), top_words(&models[1], al.partner, c));
            let (soft, voc, st, vt) = if swapped {
                (tb, ta, al.partner, al.topic)
            } else {
                (ta, tb, al.topic, al.partner)
            };
            frequencies.push(AlignedFrequency {
                soft_topic: st,
                voc_topic: vt,
                report: doc_frequency_report(&soft, &voc, [&freq[0], &freq[1]]),
            });
        }
    }
    let out = out_dir(cfg)?;
    write_json(
        &out.join("align.json"),
        &serde_json::json!({
            "schema": SCHEMA,
            "models": [models[0].kind, models[1].kind],
            "top_words": c,
            "validity_fraction": fraction,
            "alignments": alignments,
            "document_frequency": frequencies,
        }),
    )
}

pub fn strength(cfg: &ConfigArgs, state_path: &Path) -> Result<()> {
    existing(state_path)?;
    let checkpoint = Checkpoint::load(state_path).with_context(|| state_path.display().to_string())?;
    let kind = cfg.model.unwrap_or(checkpoint.kind);
    if kind != checkpoint.kind {
        bail!(Usage(format!("state was sampled with `{}`, not `{kind}`", checkpoint.kind)));
    }
    let hyper = cfg.hyper()?;
    let data = load_full(cfg)?.subsample(cfg)?;
    let supervision = Supervision::build(kind, &data.corpus, &data.lexicon, &hyper)?;
    let mut sampler = Sampler::restore(kind, &data.corpus, &supervision, &hyper, &checkpoint)
        .context("state does not match the configured corpus")?;
    let report = transfer_strength(&mut sampler);
    let out = out_dir(cfg)?;
    write_json(
        &out.join("strength.json"),
        &serde_json::json!({
            "schema": SCHEMA,
            "model": kind,
            "tokens": report.tokens,
            "mean": report.mean,
            "deciles": report.deciles,
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    LinkProportion,
    LexiconProportion,
}

pub const DEFAULT_AXIS_VALUES: [f64; 8] = [0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0];

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value = "link-proportion")]
    pub axis: Axis,
    /// Comma-separated axis values; defaults to 0,0.01,0.05,0.1,0.2,0.4,0.8,1
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long, value_enum)]
    pub axis2: Option<Axis>,
    #[arg(long, value_delimiter = ',')]
    pub values2: Vec<f64>,
    /// Comma-separated models; defaults to the configured model
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelKind>,
}

struct Cell {
    index: usize,
    values: Vec<f64>,
    model: ModelKind,
}

struct CellResult {
    rows: Vec<(usize, f64, Option<f64>)>,
    elapsed_ms: u128,
}

fn check_axis(values: &[f64], name: &str) -> Result<()> {
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        bail!(Usage(format!("{name} values must lie in [0, 1]")));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        bail!(Usage(format!("{name} values must be ascending")));
    }
    Ok(())
}

fn with_axis(cfg: &ConfigArgs, axis: Axis, value: f64) -> ConfigArgs {
    let mut c = cfg.clone();
    match axis {
        Axis::LinkProportion => c.link_proportion = Some(value),
        Axis::LexiconProportion => c.lexicon_proportion = Some(value),
    }
    c
}

fn run_cell(cfg: &ConfigArgs, full: &FullData, grid: &GridArgs, cell: &Cell) -> Result<CellResult> {
    let start = Instant::now();
    let mut c = with_axis(cfg, grid.axis, cell.values[0]);
    if let Some(axis2) = grid.axis2 {
        c = with_axis(&c, axis2, cell.values[1]);
    }
    let seed = derive_seed(cfg.seed(), cell.index as u64);
    c.seed = Some(seed);
    let hyper = c.hyper()?;
    let data = full.subsample(&c)?;
    let supervision = Supervision::build(cell.model, &data.corpus, &data.lexicon, &hyper)?;
    let trained = train_chains(cell.model, &data.corpus, &supervision, &hyper, false, 1)?;
    let reference = reference_for(&c, &trained[0].model)?;
    let classify = c.test1.is_some() && c.test2.is_some();
    let mut rows = Vec::new();
    for t in &trained {
        let coherence = model_coherence(&t.model, &reference, c.top_words());
        let f1 = if classify {
            Some(classify_with(&c, &t.model, derive_seed(seed, t.model.chain as u64))?.0.micro_f1)
        } else {
            None
        };
        rows.push((t.model.chain, coherence.mean, f1));
    }
    Ok(CellResult {
        rows,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

pub fn sweep(cfg: &ConfigArgs, grid: &GridArgs) -> Result<()> {
    let values = if grid.values.is_empty() {
        DEFAULT_AXIS_VALUES.to_vec()
    } else {
        grid.values.clone()
    };
    check_axis(&values, "--values")?;
    let values2 = match grid.axis2 {
        Some(a) if a == grid.axis => bail!(Usage("--axis2 must differ from --axis".into())),
        Some(_) if grid.values2.is_empty() => DEFAULT_AXIS_VALUES.to_vec(),
        Some(_) => grid.values2.clone(),
        None => vec![f64::NAN],
    };
    if grid.axis2.is_some() {
        check_axis(&values2, "--values2")?;
    }
    let models = if grid.models.is_empty() {
        vec![cfg.model()?]
    } else {
        grid.models.clone()
    };
    cfg.hyper()?;
    cfg.input("reference", &cfg.reference)?;
    let full = load_full(cfg)?;

    let mut cells = Vec::new();
    for &v in &values {
        for &v2 in &values2 {
            for &model in &models {
                let mut vals = vec![v];
                if grid.axis2.is_some() {
                    vals.push(v2);
                }
                cells.push(Cell {
                    index: cells.len(),
                    values: vals,
                    model,
                });
            }
        }
    }
    let results: Vec<Result<CellResult>> =
        pool(cfg.jobs())?.install(|| cells.par_iter().map(|cell| run_cell(cfg, &full, grid, cell)).collect());

    let mut tsv = String::from("axis_value");
    if grid.axis2.is_some() {
        tsv.push_str("\taxis2_value");
    }
    tsv.push_str("\tmodel\tchain\tcnpmi_mean\tf1\n");
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let mut timing = Vec::new();
    for (cell, result) in cells.iter().zip(&results) {
        match result {
            Ok(r) => {
                timing.push(r.elapsed_ms);
                for &(chain, cnpmi, f1) in &r.rows {
                    let axes: Vec<String> = cell.values.iter().map(|v| format_sig9(*v)).collect();
                    let f1 = f1.map_or_else(|| "NA".to_string(), format_sig9);
                    tsv.push_str(&format!("{}\t{}\t{chain}\t{}\t{f1}\n", axes.join("\t"), cell.model, format_sig9(cnpmi)));
                }
                summary.push(serde_json::json!({
                    "cell": cell.index,
                    "values": cell.values,
                    "model": cell.model,
                    "chains": r.rows.iter().map(|&(chain, cnpmi, f1)| serde_json::json!({
                        "chain": chain, "cnpmi_mean": cnpmi, "f1": f1,
                    })).collect::<Vec<_>>(),
                }));
            }
            Err(e) => {
                warn!("cell {} ({} at {:?}) failed: {e:#}", cell.index, cell.model, cell.values);
                timing.push(0);
                failures.push(serde_json::json!({
                    "cell": cell.index,
                    "values": cell.values,
                    "model": cell.model,
                    "error": format!("{e:#}"),
                }));
            }
        }
    }
    let out = out_dir(cfg)?;
    fs::write(out.join("sweep.tsv"), tsv)?;
    write_json(
        &out.join("sweep.json"),
        &serde_json::json!({
            "schema": SCHEMA,
            "axis": grid.axis,
            "axis2": grid.axis2,
            "base_seed": cfg.seed(),
            "cells": summary,
            "failures": failures,
        }),
    )?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            schema: SCHEMA,
            elapsed_ms: timing,
        },
    )?;
    if !failures.is_empty() {
        bail!("{} of {} sweep cells failed", failures.len(), cells.len());
    }
    Ok(())
}
