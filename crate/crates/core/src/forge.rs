//! Synthetic negatives for quality-scorer training: cross-modal mixing with
//! an opposite-polarity donor, random feature masking, and polarity flips.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureSample;
use crate::error::{Error, Result};
use crate::rng::{bernoulli, StreamRng};

/// Raw scorer input before text projection and polarity embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaInput {
    pub h_v: Vec<f64>,
    /// Missing audio; treated as the zero vector downstream.
    pub h_a: Option<Vec<f64>>,
    pub h_t_raw: Vec<f64>,
    pub polarity: u8,
}

impl From<&FeatureSample> for QaInput {
    fn from(s: &FeatureSample) -> Self {
        Self {
            h_v: s.h_v.clone(),
            h_a: s.h_a.clone(),
            h_t_raw: s.h_t_raw.clone(),
            polarity: s.polarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Pos,
    Mix,
    Mask,
    Flip,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Pos, Family::Mix, Family::Mask, Family::Flip];

    /// Binary quality label: only untouched samples count as good.
    pub fn label(self) -> u8 {
        match self {
            Family::Pos => 1,
            _ => 0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub donor: Option<String>,
    pub mask_seed: Option<u64>,
    /// `true` keeps video and swaps audio; `false` swaps video.
    pub z: Option<bool>,
}

impl Provenance {
    fn source(id: &str) -> Self {
        Self {
            source: id.to_string(),
            donor: None,
            mask_seed: None,
            z: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgedItem {
    pub input: QaInput,
    pub provenance: Provenance,
}

/// A labeled item of a batch to forge from.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceItem {
    pub id: String,
    pub input: QaInput,
}

impl From<&FeatureSample> for SourceItem {
    fn from(s: &FeatureSample) -> Self {
        Self {
            id: s.id.clone(),
            input: QaInput::from(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForgedBatch {
    pub pos: Vec<ForgedItem>,
    pub mix: Vec<ForgedItem>,
    pub mask: Vec<ForgedItem>,
    pub flip: Vec<ForgedItem>,
}

impl ForgedBatch {
    pub fn family(&self, f: Family) -> &[ForgedItem] {
        match f {
            Family::Pos => &self.pos,
            Family::Mix => &self.mix,
            Family::Mask => &self.mask,
            Family::Flip => &self.flip,
        }
    }

    pub fn is_empty(&self) -> bool {
        Family::ALL.iter().all(|&f| self.family(f).is_empty())
    }
}

pub fn positives(batch: &[SourceItem]) -> Vec<ForgedItem> {
    batch
        .iter()
        .map(|s| ForgedItem {
            input: s.input.clone(),
            provenance: Provenance::source(&s.id),
        })
        .collect()
}

/// For each item pick a uniform opposite-polarity donor from the batch and
/// swap exactly one of video/audio with it. Items without an admissible
/// donor are skipped.
pub fn mix_negatives(batch: &[SourceItem], rng: &mut StreamRng) -> Vec<ForgedItem> {
    let mut out = Vec::with_capacity(batch.len());
    for (i, src) in batch.iter().enumerate() {
        let donors: Vec<usize> = (0..batch.len())
            .filter(|&j| j != i && batch[j].input.polarity != src.input.polarity)
            .collect();
        if donors.is_empty() {
            continue;
        }
        let donor = &batch[donors[rng.gen_range(0..donors.len())]];
        let z = bernoulli(rng, 0.5);
        let mut input = src.input.clone();
        if z {
            input.h_a = donor.input.h_a.clone();
        } else {
            input.h_v = donor.input.h_v.clone();
        }
        out.push(ForgedItem {
            input,
            provenance: Provenance {
                source: src.id.clone(),
                donor: Some(donor.id.clone()),
                mask_seed: None,
                z: Some(z),
            },
        });
    }
    if out.is_empty() && !batch.is_empty() {
        log::warn!("single-polarity batch: no mixed negatives forged");
    }
    out
}

fn apply_mask(rng: &mut StreamRng, x: &mut [f64], rho: f64) {
    for v in x.iter_mut() {
        if bernoulli(rng, rho) {
            *v = 0.0;
        }
    }
}

/// Zero each dimension of every pathway independently with probability `rho`.
pub fn mask_negatives(batch: &[SourceItem], rho: f64, rng: &mut StreamRng) -> Result<Vec<ForgedItem>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("mask rate {rho} outside [0, 1]")));
    }
    Ok(batch
        .iter()
        .map(|src| {
            let mask_seed: u64 = rng.gen();
            let mut mrng = StreamRng::seed_from_u64(mask_seed);
            let mut input = src.input.clone();
            apply_mask(&mut mrng, &mut input.h_v, rho);
            if let Some(a) = input.h_a.as_mut() {
                apply_mask(&mut mrng, a, rho);
            }
            apply_mask(&mut mrng, &mut input.h_t_raw, rho);
            ForgedItem {
                input,
                provenance: Provenance {
                    mask_seed: Some(mask_seed),
                    ..Provenance::source(&src.id)
                },
            }
        })
        .collect())
}

/// Same features, opposite polarity condition.
pub fn flip_negatives(batch: &[SourceItem]) -> Vec<ForgedItem> {
    batch
        .iter()
        .map(|src| {
            let mut input = src.input.clone();
            input.polarity = 1 - input.polarity.min(1);
            ForgedItem {
                input,
                provenance: Provenance::source(&src.id),
            }
        })
        .collect()
}

/// All four families for one training step.
pub fn forge(batch: &[SourceItem], rho: f64, rng: &mut StreamRng) -> Result<ForgedBatch> {
    if batch.is_empty() {
        return Err(Error::invalid("cannot forge negatives from an empty batch"));
    }
    let mix = mix_negatives(batch, rng);
    let mask = mask_negatives(batch, rho, rng)?;
    Ok(ForgedBatch {
        pos: positives(batch),
        mix,
        mask,
        flip: flip_negatives(batch),
    })
}
