use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Arm, PipelineConfig};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "augqa-report";
pub const REPORT_VERSION: u32 = 1;
pub const BINNING_NOTE: &str =
    "acc_k bins [-1, 1] into k equal-width classes; k=2 uses y >= 0 as positive";

/// Held-out metrics of one trained head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub n: usize,
    pub acc2: f64,
    pub acc5: f64,
    pub acc7: f64,
    pub f1_weighted: f64,
    pub mae: f64,
    /// `None` when either side has zero variance.
    pub corr: Option<f64>,
    pub w_acc: f64,
    pub w_f1: f64,
    pub w_prec: f64,
    pub w_rec: f64,
}

impl ArmMetrics {
    /// Arithmetic mean of each field; `corr` is the mean over the rows where it is defined.
    pub fn mean(rows: &[ArmMetrics]) -> ArmMetrics {
        let k = rows.len() as f64;
        let avg = |f: fn(&ArmMetrics) -> f64| rows.iter().map(f).sum::<f64>() / k;
        let corrs: Vec<f64> = rows.iter().filter_map(|r| r.corr).collect();
        ArmMetrics {
            n: rows.iter().map(|r| r.n).sum::<usize>() / rows.len().max(1),
            acc2: avg(|r| r.acc2),
            acc5: avg(|r| r.acc5),
            acc7: avg(|r| r.acc7),
            f1_weighted: avg(|r| r.f1_weighted),
            mae: avg(|r| r.mae),
            corr: (!corrs.is_empty()).then(|| corrs.iter().sum::<f64>() / corrs.len() as f64),
            w_acc: avg(|r| r.w_acc),
            w_f1: avg(|r| r.w_f1),
            w_prec: avg(|r| r.w_prec),
            w_rec: avg(|r| r.w_rec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: ArmMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arm: Arm,
    pub per_seed: Vec<SeedMetrics>,
    pub mean: ArmMetrics,
}

/// Scorer behaviour on one seed's corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaDiagnostics {
    pub seed: u64,
    /// Clean (hidden quality 1) vs corrupted held-out augments.
    pub heldout_auc: Option<f64>,
    pub mean_score_original: f64,
    pub mean_score_clean: Option<f64>,
    pub mean_score_corrupted: Option<f64>,
    pub score_weight_pearson: Option<f64>,
    pub final_loss: Option<f64>,
    pub corpus_checksum: String,
    pub qa_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub binning: String,
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    pub qa: Vec<QaDiagnostics>,
    pub arms: Vec<MetricsReport>,
}

impl Report {
    pub fn arm(&self, arm: Arm) -> Option<&MetricsReport> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Report = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported report {} v{}",
                report.format, report.version
            )));
        }
        Ok(report)
    }

    /// Plain-text table of the mean row per arm plus the scorer diagnostics.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        writeln!(s, "seeds: {}  ({})", seeds.join(","), self.binning).unwrap();
        writeln!(
            s,
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "arm", "Acc2", "Acc5", "F1", "MAE", "Corr", "wAcc", "wF1", "wPrec", "wRec"
        )
        .unwrap();
        for a in &self.arms {
            let m = &a.mean;
            let corr = m.corr.map_or("-".to_string(), |c| format!("{c:.3}"));
            writeln!(
                s,
                "{:<16} {:>7.2} {:>7.2} {:>7.2} {:>7.3} {:>7} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                a.arm.name(),
                100.0 * m.acc2,
                100.0 * m.acc5,
                100.0 * m.f1_weighted,
                m.mae,
                corr,
                100.0 * m.w_acc,
                100.0 * m.w_f1,
                100.0 * m.w_prec,
                100.0 * m.w_rec
            )
            .unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}", "seed", "AUC", "s_orig", "s_clean", "s_corr", "r(s,w)").unwrap();
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        for q in &self.qa {
            writeln!(
                s,
                "{:<8} {:>8} {:>8.3} {:>8} {:>8} {:>8}",
                q.seed,
                opt(q.heldout_auc),
                q.mean_score_original,
                opt(q.mean_score_clean),
                opt(q.mean_score_corrupted),
                opt(q.score_weight_pearson)
            )
            .unwrap();
        }
        s
    }

    /// One CSV row per (arm, seed) for external plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,seed,n,acc2,acc5,acc7,f1_weighted,mae,corr,w_acc,w_f1,w_prec,w_rec\n");
        for a in &self.arms {
            for row in &a.per_seed {
                let m = &row.metrics;
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    a.arm.name(),
                    row.seed,
                    m.n,
                    m.acc2,
                    m.acc5,
                    m.acc7,
                    m.f1_weighted,
                    m.mae,
                    m.corr.map_or(String::new(), |c| c.to_string()),
                    m.w_acc,
                    m.w_f1,
                    m.w_prec,
                    m.w_rec
                )
                .unwrap();
            }
        }
        s
    }
}
