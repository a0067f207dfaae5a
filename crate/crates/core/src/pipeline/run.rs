use std::path::Path;

use rayon::prelude::*;

use super::config::{Arm, PipelineConfig};
use super::report::{
    ArmMetrics, MetricsReport, QaDiagnostics, Report, SeedMetrics, BINNING_NOTE, REPORT_FORMAT,
    REPORT_VERSION,
};
use crate::corpus::{generate_corpus, save_corpus, Corpus};
use crate::error::{Error, Result};
use crate::finetune::{predict, train_stage1, write_run_log, SurrogateHead, TrainRun, WeightSource};
use crate::metrics::{acc_k, bin_class, mae, pearson_corr, roc_auc, weighted_scores};
use crate::qa::{
    reproducible_timestamp, score_corpus, train_stage0, write_weight_file, QaConfig, QaParams,
    WeightFile,
};

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Invalid(msg) => Error::Invalid(format!("{name}: {msg}")),
        Error::Shape(msg) => Error::Shape(format!("{name}: {msg}")),
        other => Error::Runtime(format!("{name}: {other}")),
    })
}

/// Metrics of `head` on the originals of `corpus` (or every record).
pub fn evaluate(head: &SurrogateHead, corpus: &Corpus, originals_only: bool) -> Result<ArmMetrics> {
    let verbalizer = &corpus.header().verbalizer;
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for r in corpus.records() {
        if originals_only && !r.is_original() {
            continue;
        }
        pred.push(predict(head, r, verbalizer)?);
        gold.push(r.sentiment);
    }
    if pred.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let pred_cls: Vec<usize> = pred.iter().map(|&y| bin_class(y, 2)).collect();
    let gold_cls: Vec<usize> = gold.iter().map(|&y| bin_class(y, 2)).collect();
    let w = weighted_scores(&pred_cls, &gold_cls)?;
    Ok(ArmMetrics {
        n: pred.len(),
        acc2: acc_k(&pred, &gold, 2)?,
        acc5: acc_k(&pred, &gold, 5)?,
        acc7: acc_k(&pred, &gold, 7)?,
        f1_weighted: w.f1,
        mae: mae(&pred, &gold)?,
        corr: pearson_corr(&pred, &gold).ok(),
        w_acc: w.accuracy,
        w_f1: w.f1,
        w_prec: w.precision,
        w_rec: w.recall,
    })
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Scorer behaviour: held-out clean-vs-corrupted AUC, score means, and the
/// score/weight correlation over the exported augments.
pub fn qa_diagnostics(
    seed: u64,
    params: &QaParams,
    test: &Corpus,
    weights: &WeightFile,
    final_loss: Option<f64>,
) -> Result<QaDiagnostics> {
    let scores = score_corpus(test, params)?;
    let mut clean = Vec::new();
    let mut corrupted = Vec::new();
    let mut originals = Vec::new();
    for r in test.records() {
        let s = scores[&r.id];
        if r.is_original() {
            originals.push(s);
        } else if r.hidden_quality == Some(1.0) {
            clean.push(s);
        } else if r.hidden_quality.is_some() {
            corrupted.push(s);
        }
    }
    let heldout_auc = if clean.is_empty() || corrupted.is_empty() {
        None
    } else {
        let all: Vec<f64> = clean.iter().chain(&corrupted).copied().collect();
        let labels: Vec<bool> = (0..all.len()).map(|i| i < clean.len()).collect();
        Some(roc_auc(&all, &labels)?)
    };
    let (s, w): (Vec<f64>, Vec<f64>) = weights
        .entries
        .iter()
        .filter(|e| e.origin == crate::corpus::Origin::Augmented)
        .map(|e| (e.score, e.weight))
        .unzip();
    Ok(QaDiagnostics {
        seed,
        heldout_auc,
        mean_score_original: mean_of(&originals).unwrap_or(f64::NAN),
        mean_score_clean: mean_of(&clean),
        mean_score_corrupted: mean_of(&corrupted),
        score_weight_pearson: if s.len() >= 2 { pearson_corr(&s, &w).ok() } else { None },
        final_loss,
        corpus_checksum: weights.metadata.corpus_checksum.clone(),
        qa_checksum: params.checksum(),
    })
}

/// Everything produced for one seed.
pub struct SeedOutcome {
    pub seed: u64,
    pub train: Corpus,
    pub test: Corpus,
    pub qa: QaParams,
    pub weights: WeightFile,
    pub diagnostics: QaDiagnostics,
    pub arms: Vec<(Arm, TrainRun, ArmMetrics)>,
}

pub fn run_seed(cfg: &PipelineConfig, seed: u64) -> Result<SeedOutcome> {
    let corpus = stage("gen-corpus", generate_corpus(&cfg.generator, seed))?;
    let (train, test) = stage("gen-corpus", corpus.split_holdout(cfg.holdout_fraction, seed))?;
    let qa_cfg = QaConfig {
        seed,
        ..cfg.qa.clone()
    };
    let (qa, log) = stage("stage0", train_stage0(&train, &qa_cfg))?;
    let weights = stage(
        "score",
        WeightFile::build(&train, &qa, &cfg.weight_map, reproducible_timestamp()),
    )?;
    let final_loss = log.loss.iter().rev().find_map(|l| *l);
    let diagnostics = stage("score", qa_diagnostics(seed, &qa, &test, &weights, final_loss))?;

    let source = WeightSource::File(weights.clone());
    let arms = cfg
        .arms
        .par_iter()
        .map(|&arm| {
            let ws = if arm.uses_weights() {
                source.clone()
            } else {
                WeightSource::Uniform
            };
            let run = stage(
                "stage1",
                train_stage1(&train, &ws, &cfg.head, &arm.selection(cfg.subset_fraction), seed),
            )?;
            let metrics = stage("eval", evaluate(&run.head, &test, true))?;
            Ok((arm, run, metrics))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SeedOutcome {
        seed,
        train,
        test,
        qa,
        weights,
        diagnostics,
        arms,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_artifacts(dir: &Path, out: &SeedOutcome) -> Result<()> {
    let seed_dir = dir.join(format!("seed-{}", out.seed));
    std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
    save_corpus(&out.train, seed_dir.join("train.jsonl"))?;
    save_corpus(&out.test, seed_dir.join("test.jsonl"))?;
    out.qa.to_snapshot(out.train.header()).save(seed_dir.join("qa.json"))?;
    write_weight_file(&out.weights, seed_dir.join("weights.json"))?;
    for (arm, run, _) in &out.arms {
        run.head
            .to_snapshot(out.train.header())
            .save(seed_dir.join(format!("head-{}.json", arm.name())))?;
        write_run_log(run, seed_dir.join(format!("run-{}.jsonl", arm.name())))?;
    }
    Ok(())
}

/// Run every seed and arm, aggregate per-seed and mean metrics, and write
/// artifacts plus `report.json` / `report.txt` when `out_dir` is set.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Report> {
    cfg.validate()?;
    let outcomes = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>>>()?;

    let arms = cfg
        .arms
        .iter()
        .map(|&arm| {
            let per_seed: Vec<SeedMetrics> = outcomes
                .iter()
                .map(|o| SeedMetrics {
                    seed: o.seed,
                    metrics: o.arms.iter().find(|(a, _, _)| *a == arm).expect("arm ran").2,
                })
                .collect();
            let rows: Vec<ArmMetrics> = per_seed.iter().map(|r| r.metrics).collect();
            MetricsReport {
                arm,
                mean: ArmMetrics::mean(&rows),
                per_seed,
            }
        })
        .collect();

    let report = Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        binning: BINNING_NOTE.into(),
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        qa: outcomes.iter().map(|o| o.diagnostics.clone()).collect(),
        arms,
    };

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for o in &outcomes {
            stage("report", write_artifacts(dir, o))?;
        }
        write(&dir.join("config.json"), cfg.to_json())?;
        write(&dir.join("report.json"), report.to_json())?;
        write(&dir.join("report.txt"), report.render_table())?;
    }
    Ok(report)
}
