//! Score-to-weight mapping and the weight file exchanged between stages.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{score_corpus, QaParams};
use crate::corpus::{Corpus, Origin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightMapConfig {
    pub w_min: f64,
    pub w_max: f64,
    pub gamma: f64,
}

impl Default for WeightMapConfig {
    fn default() -> Self {
        Self {
            w_min: 0.1,
            w_max: 1.5,
            gamma: 1.0,
        }
    }
}

impl WeightMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_min.is_finite() && self.w_max.is_finite() && self.w_min >= 0.0) {
            return Err(Error::invalid("w_min and w_max must be finite with w_min >= 0"));
        }
        if self.w_min > self.w_max {
            return Err(Error::invalid(format!(
                "w_min ({}) must not exceed w_max ({})",
                self.w_min, self.w_max
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be a finite value > 0"));
        }
        Ok(())
    }
}

/// `w = w_min + s^gamma * (w_max - w_min)`.
pub fn map_weight(score: f64, cfg: &WeightMapConfig) -> Result<f64> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("score {score} outside [0, 1]")));
    }
    Ok(cfg.w_min + libm::pow(score, cfg.gamma) * (cfg.w_max - cfg.w_min))
}

/// Originals always train at weight 1; augments follow [`map_weight`].
pub fn sample_weight(origin: Origin, score: f64, cfg: &WeightMapConfig) -> Result<f64> {
    match origin {
        Origin::Original => {
            cfg.validate()?;
            Ok(1.0)
        }
        Origin::Augmented => map_weight(score, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub id: String,
    pub origin: Origin,
    pub score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightMetadata {
    pub corpus_checksum: String,
    pub created_at: String,
    pub gamma: f64,
    pub qa_checksum: String,
    pub w_max: f64,
    pub w_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    /// Sorted by id.
    pub entries: Vec<WeightEntry>,
    pub metadata: WeightMetadata,
    pub version: u32,
}

pub const WEIGHT_FILE_VERSION: u32 = 1;

impl WeightFile {
    pub fn build(
        corpus: &Corpus,
        params: &QaParams,
        cfg: &WeightMapConfig,
        created_at: String,
    ) -> Result<Self> {
        cfg.validate()?;
        let scores = score_corpus(corpus, params)?;
        let entries = scores
            .into_iter()
            .map(|(id, score)| {
                let origin = corpus.get(&id).expect("scored id exists").origin;
                Ok(WeightEntry {
                    weight: sample_weight(origin, score, cfg)?,
                    id,
                    origin,
                    score,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            metadata: WeightMetadata {
                corpus_checksum: corpus.content_checksum(),
                created_at,
                gamma: cfg.gamma,
                qa_checksum: params.checksum(),
                w_max: cfg.w_max,
                w_min: cfg.w_min,
            },
            version: WEIGHT_FILE_VERSION,
        })
    }

    pub fn weight(&self, id: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| self.entries[i].weight)
    }

    /// Fail unless this file was exported for `corpus`.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if self.metadata.corpus_checksum != corpus.content_checksum() {
            return Err(Error::CorpusChecksum);
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.version != WEIGHT_FILE_VERSION {
            return Err(Error::invalid(format!(
                "unsupported weight file version {}",
                self.version
            )));
        }
        let mut seen = BTreeSet::new();
        for w in self.entries.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::invalid("weight file entries must be sorted by id and unique"));
            }
        }
        for e in &self.entries {
            seen.insert(e.id.as_str());
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::invalid(format!("weight for {} is not a valid weight", e.id)));
            }
        }
        Ok(())
    }

    /// Canonical text: sorted keys, 17 significant digits for every float.
    pub fn to_canonical_json(&self) -> String {
        let mut s = String::from("{\"entries\":[");
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(
                s,
                "{{\"id\":{},\"origin\":\"{:?}\",\"score\":{},\"weight\":{}}}",
                json_string(&e.id),
                e.origin,
                fmt_f64(e.score),
                fmt_f64(e.weight)
            )
            .unwrap();
        }
        let m = &self.metadata;
        write!(
            s,
            "],\"metadata\":{{\"corpus_checksum\":{},\"created_at\":{},\"gamma\":{},\"qa_checksum\":{},\"w_max\":{},\"w_min\":{}}},\"version\":{}}}\n",
            json_string(&m.corpus_checksum),
            json_string(&m.created_at),
            fmt_f64(m.gamma),
            json_string(&m.qa_checksum),
            fmt_f64(m.w_max),
            fmt_f64(m.w_min),
            self.version
        )
        .unwrap();
        s
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// 17 significant digits in exponent form; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `SOURCE_DATE_EPOCH` as RFC 3339, falling back to the Unix epoch so
/// repeated exports stay byte-identical.
pub fn reproducible_timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .unwrap_or(0);
    chrono::DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

pub fn write_weight_file(file: &WeightFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, file.to_canonical_json()).map_err(|e| Error::io(path, e))
}

/// Score every record, map scores to weights, and write the weight file.
pub fn export_weights(
    corpus: &Corpus,
    params: &QaParams,
    cfg: &WeightMapConfig,
    path: impl AsRef<Path>,
) -> Result<WeightFile> {
    let file = WeightFile::build(corpus, params, cfg, reproducible_timestamp())?;
    write_weight_file(&file, path)?;
    Ok(file)
}

pub fn load_weight_file(path: impl AsRef<Path>) -> Result<WeightFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: WeightFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    file.validate()?;
    Ok(file)
}
