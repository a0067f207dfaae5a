//! Feature-level training records, the corpus file format, and a synthetic
//! generator with a parametric corruption simulator.

mod generate;
mod io;
mod verbalize;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use generate::{generate_corpus, CorruptionProfile, GeneratorConfig, GENERATOR_VERSION};
pub use io::{load_corpus, save_corpus};
pub use verbalize::Verbalizer;

use crate::error::{Error, Result};

/// Target positions carrying this value are excluded from the token loss.
pub const IGNORE_INDEX: i64 = -100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Original,
    Augmented,
}

/// One training record: pooled per-modality features plus labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSample {
    pub id: String,
    pub h_v: Vec<f64>,
    /// `None` when the audio track is missing.
    pub h_a: Option<Vec<f64>>,
    pub h_t_raw: Vec<f64>,
    pub polarity: u8,
    pub sentiment: f64,
    pub origin: Origin,
    pub parent_id: Option<String>,
    /// Ground-truth reliability for synthetic corpora. Evaluation only.
    pub hidden_quality: Option<f64>,
    pub target_tokens: Vec<i64>,
}

impl FeatureSample {
    pub fn is_original(&self) -> bool {
        self.origin == Origin::Original
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub d: usize,
    pub d_t: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub generator_version: String,
    #[serde(default)]
    pub verbalizer: Verbalizer,
}

impl CorpusHeader {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_t == 0 || self.vocab_size == 0 {
            return Err(Error::invalid(
                "corpus header: d, d_t and vocab_size must be positive",
            ));
        }
        Ok(())
    }
}

/// Polarity from a sentiment score: 1 when `y >= 0`, else 0.
pub fn derive_polarity(y: f64) -> Result<u8> {
    if !(-1.0..=1.0).contains(&y) {
        return Err(Error::invalid(format!("sentiment {y} outside [-1, 1]")));
    }
    Ok(if y >= 0.0 { 1 } else { 0 })
}

/// An immutable, validated collection of records sharing one header.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    header: CorpusHeader,
    records: Vec<FeatureSample>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(header: CorpusHeader, records: Vec<FeatureSample>) -> Result<Self> {
        header.validate()?;
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            validate_record(&header, r)?;
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate record id {}", r.id)));
            }
        }
        for r in &records {
            match (r.origin, &r.parent_id) {
                (Origin::Original, None) => {}
                (Origin::Original, Some(_)) => {
                    return Err(Error::invalid(format!(
                        "record {}: original sample must not have a parent_id",
                        r.id
                    )))
                }
                (Origin::Augmented, None) => {
                    return Err(Error::invalid(format!(
                        "record {}: augmented sample needs a parent_id",
                        r.id
                    )))
                }
                (Origin::Augmented, Some(p)) => match index.get(p) {
                    Some(&pi) if records[pi].is_original() => {}
                    Some(_) => {
                        return Err(Error::invalid(format!(
                            "record {}: parent {p} is not an original sample",
                            r.id
                        )))
                    }
                    None => {
                        return Err(Error::invalid(format!(
                            "record {}: unresolvable parent_id {p}",
                            r.id
                        )))
                    }
                },
            }
        }
        Ok(Self {
            header,
            records,
            index,
        })
    }

    pub fn header(&self) -> &CorpusHeader {
        &self.header
    }

    pub fn records(&self) -> &[FeatureSample] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureSample> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn originals(&self) -> impl Iterator<Item = &FeatureSample> {
        self.records.iter().filter(|r| r.is_original())
    }

    pub fn augmented(&self) -> impl Iterator<Item = &FeatureSample> {
        self.records.iter().filter(|r| !r.is_original())
    }

    pub fn has_both_polarities(&self) -> bool {
        let mut seen = [false; 2];
        for r in &self.records {
            seen[r.polarity as usize & 1] = true;
        }
        seen[0] && seen[1]
    }

    /// SHA-256 over ids and the raw bits of every feature array.
    pub fn feature_checksum(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update((r.id.len() as u64).to_le_bytes());
            h.update(r.id.as_bytes());
            hash_floats(&mut h, &r.h_v);
            match &r.h_a {
                Some(a) => {
                    h.update([1u8]);
                    hash_floats(&mut h, a);
                }
                None => h.update([0u8]),
            }
            hash_floats(&mut h, &r.h_t_raw);
        }
        hex::encode(h.finalize())
    }

    /// SHA-256 of the canonical file serialization.
    pub fn content_checksum(&self) -> String {
        hex::encode(Sha256::digest(io::to_jsonl(self)))
    }

    /// Keep the records accepted by `keep`. Augments whose parent is dropped
    /// are dropped too.
    pub fn filter(&self, mut keep: impl FnMut(&FeatureSample) -> bool) -> Result<Corpus> {
        let kept: Vec<bool> = self.records.iter().map(&mut keep).collect();
        let records = self
            .records
            .iter()
            .zip(&kept)
            .filter(|(r, &k)| {
                k && match &r.parent_id {
                    Some(p) => kept[self.index[p]],
                    None => true,
                }
            })
            .map(|(r, _)| r.clone())
            .collect();
        Corpus::new(self.header.clone(), records)
    }

    /// Split whole families (an original and its augments) into a training
    /// part and a held-out part. The held-out originals are drawn per
    /// polarity so both parts keep the class balance.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "holdout fraction {fraction} outside [0, 1]"
            )));
        }
        let mut held = std::collections::HashSet::new();
        for pol in 0..2u8 {
            let ids: Vec<&str> = self
                .originals()
                .filter(|r| r.polarity == pol)
                .map(|r| r.id.as_str())
                .collect();
            let n_held = (ids.len() as f64 * fraction).round() as usize;
            let mut rng = crate::rng::stream(seed, "holdout", pol as u64);
            let perm = crate::rng::permutation(&mut rng, ids.len());
            held.extend(perm[..n_held].iter().map(|&i| ids[i].to_string()));
        }
        let family = |r: &FeatureSample| r.parent_id.clone().unwrap_or_else(|| r.id.clone());
        let train = self.filter(|r| !held.contains(&family(r)))?;
        let test = self.filter(|r| held.contains(&family(r)))?;
        Ok((train, test))
    }
}

fn hash_floats(h: &mut Sha256, xs: &[f64]) {
    h.update((xs.len() as u64).to_le_bytes());
    for x in xs {
        h.update(x.to_bits().to_le_bytes());
    }
}

fn validate_record(header: &CorpusHeader, r: &FeatureSample) -> Result<()> {
    let dims_ok = r.h_v.len() == header.d
        && r.h_a.as_ref().map_or(true, |a| a.len() == header.d)
        && r.h_t_raw.len() == header.d_t;
    if !dims_ok {
        return Err(Error::DimMismatch { id: r.id.clone() });
    }
    let finite = crate::numerics::all_finite(&r.h_v)
        && r.h_a.as_deref().map_or(true, crate::numerics::all_finite)
        && crate::numerics::all_finite(&r.h_t_raw);
    if !finite {
        return Err(Error::invalid(format!("record {}: non-finite feature", r.id)));
    }
    let expected = derive_polarity(r.sentiment)
        .map_err(|e| Error::invalid(format!("record {}: {e}", r.id)))?;
    if r.polarity != expected {
        return Err(Error::invalid(format!(
            "record {}: polarity {} disagrees with sentiment {}",
            r.id, r.polarity, r.sentiment
        )));
    }
    if let Some(q) = r.hidden_quality {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!(
                "record {}: hidden_quality {q} outside [0, 1]",
                r.id
            )));
        }
    }
    let vocab = header.vocab_size as i64;
    if r
        .target_tokens
        .iter()
        .any(|&t| t != IGNORE_INDEX && !(0..vocab).contains(&t))
    {
        return Err(Error::invalid(format!(
            "record {}: target token outside vocabulary",
            r.id
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn header(d: usize, d_t: usize) -> CorpusHeader {
        CorpusHeader {
            d,
            d_t,
            vocab_size: 8,
            seed: 0,
            generator_version: "test".into(),
            verbalizer: Verbalizer::default(),
        }
    }

    pub fn original(id: &str, d: usize, d_t: usize, y: f64) -> FeatureSample {
        FeatureSample {
            id: id.into(),
            h_v: (0..d).map(|i| y + i as f64 * 0.1).collect(),
            h_a: Some((0..d).map(|i| y - i as f64 * 0.05).collect()),
            h_t_raw: (0..d_t).map(|i| y * (i as f64 + 1.0)).collect(),
            polarity: derive_polarity(y).unwrap(),
            sentiment: y,
            origin: Origin::Original,
            parent_id: None,
            hidden_quality: Some(1.0),
            target_tokens: Verbalizer::default().encode(y, 8),
        }
    }
}
