//! Synthetic corpus generator.
//!
//! Each modality `m` has a fixed mean signature `mu_m` and, per latent
//! context `k`, an offset `o_mk`, a sentiment axis `u_mk` and a polarity
//! axis `c_mk`, all drawn once from the root seed. An original in context
//! `k` with sentiment `y` and polarity `p` gets
//!
//! ```text
//! h_m = mu_m + o_mk + signal * y * u_mk + cluster_gap * (2p - 1) * c_mk + noise * eps
//! ```
//!
//! Augments copy their parent and then receive exactly one perturbation:
//! a benign partial resample of the noise, a cross-modal swap with an opposite-polarity donor,
//! masking degradation, or drift of the content to the opposite sentiment
//! while the label stays.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_polarity, Corpus, CorpusHeader, FeatureSample, Origin, Verbalizer};
use crate::error::{Error, Result};
use crate::rng::{bernoulli, gaussian_vec, stream, StreamRng};

pub const GENERATOR_VERSION: &str = "synth-v1";

/// Upper bound on the hidden quality of any corrupted augment.
const CORRUPT_QUALITY_CAP: f64 = 0.3;
/// Largest opposite-side sentiment magnitude a drifted augment can end up with.
const DRIFT_MAX: f64 = 1.0;
/// Swap donors are drawn from originals at least this far from neutral.
const DONOR_MIN_MAGNITUDE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionProfile {
    /// Share of a benign augment's noise that is redrawn: 0 copies the
    /// parent, 1 gives an independent sample with the parent's sentiment.
    pub benign_resample: f64,
    pub p_swap: f64,
    pub p_degrade: f64,
    /// Fraction of dimensions zeroed in a degraded modality.
    pub degrade_mask_rate: f64,
    pub p_label_noise: f64,
    /// Smallest opposite-side sentiment magnitude after drift.
    pub drift_min: f64,
}

impl Default for CorruptionProfile {
    fn default() -> Self {
        Self {
            benign_resample: 1.0,
            p_swap: 0.1,
            p_degrade: 0.1,
            degrade_mask_rate: 0.5,
            p_label_noise: 0.1,
            drift_min: 0.6,
        }
    }
}

impl CorruptionProfile {
    pub fn clean() -> Self {
        Self {
            p_swap: 0.0,
            p_degrade: 0.0,
            p_label_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn corrupted_fraction(&self) -> f64 {
        self.p_swap + self.p_degrade + self.p_label_noise
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("benign_resample", self.benign_resample),
            ("p_swap", self.p_swap),
            ("p_degrade", self.p_degrade),
            ("degrade_mask_rate", self.degrade_mask_rate),
            ("p_label_noise", self.p_label_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(0.0..DRIFT_MAX).contains(&self.drift_min) {
            return Err(Error::invalid("drift_min must lie in [0, 1)"));
        }
        if self.corrupted_fraction() > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "p_swap + p_degrade + p_label_noise must not exceed 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_originals: usize,
    pub augments_per_original: usize,
    pub d: usize,
    pub d_t: usize,
    pub vocab_size: usize,
    /// Probability that an original has no audio track.
    pub missing_audio_rate: f64,
    /// Length of the sentiment component along each modality's sentiment axis.
    pub signal: f64,
    /// Separation of the two polarity clusters.
    pub cluster_gap: f64,
    /// Number of latent contexts (think speakers or scenes); each has its own
    /// offset, sentiment axis and polarity axis in every modality.
    pub contexts: usize,
    /// Length of each context's offset from the modality mean.
    pub context_gap: f64,
    /// Whether drift also moves the text features.
    pub drift_text: bool,
    /// Per-dimension standard deviation of the sample noise.
    pub noise: f64,
    /// Per-dimension scale of each modality's mean signature.
    pub mean_scale: f64,
    pub profile: CorruptionProfile,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_originals: 400,
            augments_per_original: 2,
            d: 64,
            d_t: 96,
            vocab_size: 8,
            missing_audio_rate: 0.0,
            signal: 5.0,
            cluster_gap: 0.5,
            contexts: 4,
            context_gap: 6.0,
            drift_text: true,
            noise: 1.0,
            mean_scale: 4.0,
            profile: CorruptionProfile::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.n_originals < 2 {
            return Err(Error::invalid(
                "cannot generate corpus: need both polarities",
            ));
        }
        if self.d < 4 || self.d_t < 4 {
            return Err(Error::invalid("feature dimensions must be at least 4"));
        }
        if self.contexts == 0 {
            return Err(Error::invalid("need at least one context"));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.missing_audio_rate) {
            return Err(Error::invalid("missing_audio_rate outside [0, 1]"));
        }
        for (name, v) in [
            ("signal", self.signal),
            ("cluster_gap", self.cluster_gap),
            ("context_gap", self.context_gap),
            ("noise", self.noise),
            ("mean_scale", self.mean_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

struct ContextGeometry {
    offset: Vec<f64>,
    sentiment_axis: Vec<f64>,
    polarity_axis: Vec<f64>,
}

struct ModalityGeometry {
    mean: Vec<f64>,
    contexts: Vec<ContextGeometry>,
}

impl ModalityGeometry {
    fn draw(seed: u64, modality: u64, dim: usize, cfg: &GeneratorConfig) -> Self {
        let mut rng = stream(seed, "geometry", modality);
        let mean = gaussian_vec(&mut rng, dim, cfg.mean_scale);
        let contexts = (0..cfg.contexts)
            .map(|_| ContextGeometry {
                offset: scaled(unit(gaussian_vec(&mut rng, dim, 1.0)), cfg.context_gap),
                sentiment_axis: unit(gaussian_vec(&mut rng, dim, 1.0)),
                polarity_axis: unit(gaussian_vec(&mut rng, dim, 1.0)),
            })
            .collect();
        Self { mean, contexts }
    }

    /// Noise-free part of the feature for sentiment `y` in context `ctx`.
    fn centre(&self, cfg: &GeneratorConfig, ctx: usize, y: f64) -> Vec<f64> {
        let sign = if y >= 0.0 { 1.0 } else { -1.0 };
        let c = &self.contexts[ctx];
        (0..self.mean.len())
            .map(|j| {
                self.mean[j]
                    + c.offset[j]
                    + cfg.signal * y * c.sentiment_axis[j]
                    + cfg.cluster_gap * sign * c.polarity_axis[j]
            })
            .collect()
    }

    /// Replace the semantic component for `from` with the one for `to`,
    /// keeping the sample's noise.
    fn drift(&self, cfg: &GeneratorConfig, ctx: usize, from: f64, to: f64, x: &mut [f64]) {
        let a = self.centre(cfg, ctx, from);
        let b = self.centre(cfg, ctx, to);
        for ((v, a), b) in x.iter_mut().zip(a).zip(b) {
            *v += b - a;
        }
    }
}

fn scaled(mut v: Vec<f64>, s: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn add_noise(rng: &mut StreamRng, x: &mut [f64], scale: f64) {
    if scale == 0.0 {
        return;
    }
    let eps = gaussian_vec(rng, x.len(), scale);
    x.iter_mut().zip(eps).for_each(|(v, e)| *v += e);
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum::<f64>())
}

pub fn original_id(i: usize) -> String {
    format!("o{i:06}")
}

pub fn augment_id(i: usize, j: usize) -> String {
    format!("o{i:06}-a{j}")
}

/// Deterministically generate a corpus of `n_originals` originals, each
/// followed by `augments_per_original` perturbed copies.
///
/// Originals alternate polarity (even index positive), so an even count
/// yields an exact balance.
pub fn generate_corpus(cfg: &GeneratorConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let geometry = [
        ModalityGeometry::draw(seed, 0, cfg.d, cfg),
        ModalityGeometry::draw(seed, 1, cfg.d, cfg),
        ModalityGeometry::draw(seed, 2, cfg.d_t, cfg),
    ];
    let verbalizer = Verbalizer::default();

    let contexts: Vec<usize> = (0..cfg.n_originals)
        .map(|i| stream(seed, "context", i as u64).gen_range(0..cfg.contexts))
        .collect();
    let originals: Vec<FeatureSample> = (0..cfg.n_originals)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "original", i as u64);
            let u: f64 = rng.gen();
            let y = if i % 2 == 0 { u } else { -(1.0 - u) };
            let mut feats: Vec<Vec<f64>> =
                geometry.iter().map(|g| g.centre(cfg, contexts[i], y)).collect();
            for f in &mut feats {
                add_noise(&mut rng, f, cfg.noise);
            }
            let has_audio = !bernoulli(&mut rng, cfg.missing_audio_rate);
            let h_t_raw = feats.pop().unwrap();
            let h_a = feats.pop().unwrap();
            let h_v = feats.pop().unwrap();
            FeatureSample {
                id: original_id(i),
                h_v,
                h_a: has_audio.then_some(h_a),
                h_t_raw,
                polarity: derive_polarity(y).expect("y in range"),
                sentiment: y,
                origin: Origin::Original,
                parent_id: None,
                hidden_quality: Some(1.0),
                target_tokens: verbalizer.encode(y, cfg.vocab_size),
            }
        })
        .collect();

    let by_polarity: [Vec<usize>; 2] = [0u8, 1].map(|p| {
        originals
            .iter()
            .enumerate()
            .filter(|(_, r)| r.polarity == p)
            .map(|(i, _)| i)
            .collect()
    });
    if by_polarity.iter().any(|v| v.is_empty()) {
        return Err(Error::invalid(
            "cannot generate corpus: need both polarities",
        ));
    }
    // Prefer clearly polarised donors; fall back to the whole side if none are.
    let by_polarity = by_polarity.map(|pool| {
        let strong: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| originals[i].sentiment.abs() >= DONOR_MIN_MAGNITUDE)
            .collect();
        if strong.is_empty() {
            pool
        } else {
            strong
        }
    });

    let k = cfg.augments_per_original;
    let augments: Vec<FeatureSample> = (0..cfg.n_originals * k)
        .into_par_iter()
        .map(|n| {
            let (i, j) = (n / k, n % k);
            let mut rng = stream(seed, "augment", n as u64);
            let parent = &originals[i];
            let id = augment_id(i, j);
            augment(cfg, &geometry, &originals, &by_polarity, parent, contexts[i], &mut rng, id)
        })
        .collect();

    let mut records = Vec::with_capacity(originals.len() + augments.len());
    let mut aug_iter = augments.into_iter();
    for o in originals {
        records.push(o);
        records.extend(aug_iter.by_ref().take(k));
    }

    let header = CorpusHeader {
        d: cfg.d,
        d_t: cfg.d_t,
        vocab_size: cfg.vocab_size,
        seed,
        generator_version: GENERATOR_VERSION.into(),
        verbalizer,
    };
    Corpus::new(header, records)
}

fn augment(
    cfg: &GeneratorConfig,
    geometry: &[ModalityGeometry; 3],
    originals: &[FeatureSample],
    by_polarity: &[Vec<usize>; 2],
    parent: &FeatureSample,
    ctx: usize,
    rng: &mut StreamRng,
    id: String,
) -> FeatureSample {
    let profile = &cfg.profile;
    let mut out = FeatureSample {
        id,
        origin: Origin::Augmented,
        parent_id: Some(parent.id.clone()),
        ..parent.clone()
    };
    let y = parent.sentiment;
    let r: f64 = rng.gen();

    let quality = if r < profile.p_swap {
        // Replace exactly one of video/audio with an opposite-polarity donor's.
        let pool = &by_polarity[1 - parent.polarity as usize];
        let donor = &originals[pool[rng.gen_range(0..pool.len())]];
        let swap_audio = bernoulli(rng, 0.5);
        let (before, after) = if swap_audio {
            out.h_a = donor.h_a.clone();
            (parent.h_a.as_deref(), donor.h_a.as_deref())
        } else {
            out.h_v = donor.h_v.clone();
            (Some(parent.h_v.as_slice()), Some(donor.h_v.as_slice()))
        };
        let zeros = vec![0.0; cfg.d];
        let before = before.unwrap_or(&zeros);
        let after = after.unwrap_or(&zeros);
        let scale = norm(before) + norm(after);
        let rel = if scale > 0.0 {
            distance(before, after) / scale
        } else {
            0.0
        };
        CORRUPT_QUALITY_CAP * (1.0 - rel.min(1.0))
    } else if r < profile.p_swap + profile.p_degrade {
        let rate = profile.degrade_mask_rate;
        for x in std::iter::once(&mut out.h_v).chain(out.h_a.as_mut()) {
            for v in x.iter_mut() {
                if bernoulli(rng, rate) {
                    *v = 0.0;
                }
            }
        }
        CORRUPT_QUALITY_CAP * (1.0 - rate)
    } else if r < profile.corrupted_fraction() {
        // Content drifts to a clearly opposite sentiment; the label stays.
        let lo = profile.drift_min;
        let strength = lo + (DRIFT_MAX - lo) * rng.gen::<f64>();
        let to = if y >= 0.0 { -strength } else { strength };
        geometry[0].drift(cfg, ctx, y, to, &mut out.h_v);
        if let Some(a) = out.h_a.as_mut() {
            geometry[1].drift(cfg, ctx, y, to, a);
        }
        if cfg.drift_text {
            geometry[2].drift(cfg, ctx, y, to, &mut out.h_t_raw);
        }
        CORRUPT_QUALITY_CAP * (DRIFT_MAX - strength) / (DRIFT_MAX - lo)
    } else {
        let f = profile.benign_resample;
        let keep = libm::sqrt(1.0 - f * f);
        for (g, x) in geometry.iter().zip([Some(&mut out.h_v), out.h_a.as_mut(), Some(&mut out.h_t_raw)]) {
            if let Some(x) = x {
                let centre = g.centre(cfg, ctx, y);
                let fresh = gaussian_vec(rng, x.len(), f * cfg.noise);
                for ((v, c), e) in x.iter_mut().zip(centre).zip(fresh) {
                    *v = c + keep * (*v - c) + e;
                }
            }
        }
        1.0
    };
    out.hidden_quality = Some(quality);
    out
}
