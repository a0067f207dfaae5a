//! Quality-aware scorer.
//!
//! The input is `x = [h_v; h_a or 0; W_t h_t_raw + b_t; Emb(p)]` (length
//! `4d`) and the logit is `w_2 . GELU(W_1 x + b_1) + b_2`. Input features are
//! constants for every gradient computed here: only the parameters in
//! [`QaParams`] ever receive updates.

mod train;
mod weights;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use train::{train_stage0, QaConfig, Stage0Log};
pub use weights::{
    export_weights, load_weight_file, map_weight, reproducible_timestamp, sample_weight,
    write_weight_file, WeightEntry, WeightFile, WeightMapConfig, WeightMetadata,
};

use crate::corpus::{Corpus, CorpusHeader};
use crate::error::{Error, Result};
use crate::forge::{Family, ForgedBatch, QaInput};
use crate::numerics::{bce_with_logit, bce_with_logit_grad, gelu, gelu_grad, sigmoid, Matrix};
use crate::snapshot::{NamedArray, Snapshot};

/// All learnable parameters of the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct QaParams {
    /// Text projection, `d x d_t`.
    pub w_t: Matrix,
    pub b_t: Vec<f64>,
    /// Polarity embeddings, one row per polarity.
    pub emb: Matrix,
    /// First MLP layer, `H x 4d`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

pub const TENSOR_NAMES: [&str; 7] = ["w_t", "b_t", "emb", "w1", "b1", "w2", "b2"];

impl QaParams {
    pub fn zeros(d: usize, d_t: usize, hidden: usize) -> Self {
        Self {
            w_t: Matrix::zeros(d, d_t),
            b_t: vec![0.0; d],
            emb: Matrix::zeros(2, d),
            w1: Matrix::zeros(hidden, 4 * d),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// `W_1` and `W_t` uniform in `+-1/sqrt(fan_in)`; everything else zero,
    /// so an untrained scorer returns exactly 0.5.
    pub fn init(d: usize, d_t: usize, hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(d, d_t, hidden);
        let mut rng = crate::rng::stream(seed, "qa-init", 0);
        let bound_t = 1.0 / (d_t as f64).sqrt();
        p.w_t = Matrix::from_fn(d, d_t, |_, _| rng.gen_range(-bound_t..bound_t));
        let bound_1 = 1.0 / ((4 * d) as f64).sqrt();
        p.w1 = Matrix::from_fn(hidden, 4 * d, |_, _| rng.gen_range(-bound_1..bound_1));
        p
    }

    pub fn d(&self) -> usize {
        self.w_t.rows()
    }

    pub fn d_t(&self) -> usize {
        self.w_t.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d(), self.d_t(), self.hidden())
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_t.as_slice(),
            &self.b_t,
            self.emb.as_slice(),
            self.w1.as_slice(),
            &self.b1,
            &self.w2,
            std::slice::from_ref(&self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_t.as_mut_slice(),
            &mut self.b_t,
            self.emb.as_mut_slice(),
            self.w1.as_mut_slice(),
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    /// All parameters concatenated in [`TENSOR_NAMES`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn from_flat(&self, flat: &[f64]) -> Self {
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
        out
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            h.update((t.len() as u64).to_le_bytes());
            for x in t {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn check_dims(&self, header: &CorpusHeader) -> Result<()> {
        if self.d() != header.d || self.d_t() != header.d_t {
            return Err(Error::Shape(format!(
                "scorer expects d={}, d_t={} but corpus has d={}, d_t={}",
                self.d(),
                self.d_t(),
                header.d,
                header.d_t
            )));
        }
        Ok(())
    }

    pub fn to_snapshot(&self, header: &CorpusHeader) -> Snapshot {
        let shapes = [
            vec![self.d(), self.d_t()],
            vec![self.d()],
            vec![2, self.d()],
            vec![self.hidden(), 4 * self.d()],
            vec![self.hidden()],
            vec![self.hidden()],
            vec![],
        ];
        let arrays = TENSOR_NAMES
            .iter()
            .zip(shapes)
            .zip(self.tensors())
            .map(|((name, shape), data)| NamedArray {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Snapshot::new("qa", header.clone(), arrays)
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        snap.expect_kind("qa")?;
        let w1 = snap.matrix("w1")?;
        let w_t = snap.matrix("w_t")?;
        let (d, d_t, hidden) = (w_t.rows(), w_t.cols(), w1.rows());
        if d != snap.header.d || d_t != snap.header.d_t {
            return Err(Error::Shape(
                "scorer snapshot arrays disagree with its echoed corpus header".into(),
            ));
        }
        let p = Self {
            w_t,
            b_t: snap.vector("b_t", d)?,
            emb: snap.matrix("emb")?,
            w1,
            b1: snap.vector("b1", hidden)?,
            w2: snap.vector("w2", hidden)?,
            b2: snap.scalar("b2")?,
        };
        if p.emb.shape() != (2, d) || p.w1.cols() != 4 * d {
            return Err(Error::Shape("scorer snapshot has inconsistent shapes".into()));
        }
        Ok(p)
    }
}

/// Build the `4d` scorer input. Missing audio becomes zeros.
pub fn assemble_input(input: &QaInput, params: &QaParams) -> Result<Vec<f64>> {
    let d = params.d();
    if input.h_v.len() != d
        || input.h_a.as_ref().map_or(false, |a| a.len() != d)
        || input.h_t_raw.len() != params.d_t()
    {
        return Err(Error::Shape(format!(
            "scorer input dims do not match parameters (d={d}, d_t={})",
            params.d_t()
        )));
    }
    let mut x = Vec::with_capacity(4 * d);
    x.extend_from_slice(&input.h_v);
    match &input.h_a {
        Some(a) => x.extend_from_slice(a),
        None => x.extend(std::iter::repeat(0.0).take(d)),
    }
    x.extend(params.w_t.affine(&input.h_t_raw, &params.b_t));
    x.extend_from_slice(params.emb.row(input.polarity.min(1) as usize));
    Ok(x)
}

struct Forward {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    logit: f64,
}

fn forward(input: &QaInput, params: &QaParams) -> Result<Forward> {
    let x = assemble_input(input, params)?;
    let pre = params.w1.affine(&x, &params.b1);
    let act: Vec<f64> = pre.iter().map(|&z| gelu(z)).collect();
    let logit = crate::numerics::dot(&params.w2, &act) + params.b2;
    Ok(Forward { x, pre, act, logit })
}

/// Scalar logit on an assembled input.
pub fn qa_logit(x: &[f64], params: &QaParams) -> Result<f64> {
    if x.len() != 4 * params.d() {
        return Err(Error::Shape(format!(
            "scorer input has length {}, expected {}",
            x.len(),
            4 * params.d()
        )));
    }
    let pre = params.w1.affine(x, &params.b1);
    Ok(pre
        .iter()
        .zip(&params.w2)
        .map(|(&z, &w)| w * gelu(z))
        .sum::<f64>()
        + params.b2)
}

pub fn score_input(input: &QaInput, params: &QaParams) -> Result<f64> {
    Ok(sigmoid(forward(input, params)?.logit))
}

/// Accumulate `scale * d(logit)/d(params)` into `grad`.
fn backward(input: &QaInput, fwd: &Forward, params: &QaParams, scale: f64, grad: &mut QaParams) {
    let d = params.d();
    grad.b2 += scale;
    for (g, a) in grad.w2.iter_mut().zip(&fwd.act) {
        *g += scale * a;
    }
    let delta: Vec<f64> = fwd
        .pre
        .iter()
        .zip(&params.w2)
        .map(|(&z, &w)| scale * w * gelu_grad(z))
        .collect();
    grad.w1.add_outer(&delta, &fwd.x, 1.0);
    grad.b1.iter_mut().zip(&delta).for_each(|(g, dz)| *g += dz);

    let mut dx = vec![0.0; 4 * d];
    params.w1.add_transpose_mul(&delta, &mut dx);
    // Only the text projection and the polarity embedding sit between the
    // parameters and the raw (constant) inputs.
    let dtext = &dx[2 * d..3 * d];
    grad.w_t.add_outer(dtext, &input.h_t_raw, 1.0);
    grad.b_t.iter_mut().zip(dtext).for_each(|(g, v)| *g += v);
    let row = grad.emb.row_mut(input.polarity.min(1) as usize);
    row.iter_mut().zip(&dx[3 * d..]).for_each(|(g, v)| *g += v);
}

/// Family weights in `[pos, mix, mask, flip]` order.
pub type Alpha = [f64; 4];

pub fn validate_alpha(alpha: &Alpha) -> Result<()> {
    if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::invalid("alpha weights must be finite and non-negative"));
    }
    if alpha.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("alpha weights must not all be zero"));
    }
    Ok(())
}

/// Sum of `alpha_k` over families that have at least one item.
fn active_normalizer(forged: &ForgedBatch, alpha: &Alpha) -> Result<f64> {
    validate_alpha(alpha)?;
    if forged.is_empty() {
        return Err(Error::invalid("all negative families are empty"));
    }
    let norm: f64 = Family::ALL
        .iter()
        .filter(|&&f| !forged.family(f).is_empty())
        .map(|&f| alpha[f.index()])
        .sum();
    if norm <= 0.0 {
        return Err(Error::invalid("no family with positive alpha has items"));
    }
    Ok(norm)
}

/// Per-family mean BCE losses; `None` for empty families.
pub fn family_losses(forged: &ForgedBatch, params: &QaParams) -> Result<[Option<f64>; 4]> {
    let mut out = [None; 4];
    for f in Family::ALL {
        let items = forged.family(f);
        if items.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for it in items {
            sum += bce_with_logit(forward(&it.input, params)?.logit, f.label());
        }
        out[f.index()] = Some(sum / items.len() as f64);
    }
    Ok(out)
}

/// `(1 / sum alpha_k) * sum alpha_k L_k` over non-empty families.
pub fn qa_loss(forged: &ForgedBatch, params: &QaParams, alpha: &Alpha) -> Result<f64> {
    let norm = active_normalizer(forged, alpha)?;
    let losses = family_losses(forged, params)?;
    Ok(Family::ALL
        .iter()
        .filter_map(|&f| losses[f.index()].map(|l| alpha[f.index()] * l))
        .sum::<f64>()
        / norm)
}

pub fn qa_loss_and_grad(
    forged: &ForgedBatch,
    params: &QaParams,
    alpha: &Alpha,
) -> Result<(f64, QaParams)> {
    let norm = active_normalizer(forged, alpha)?;
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for f in Family::ALL {
        let items = forged.family(f);
        let a = alpha[f.index()];
        if items.is_empty() || a == 0.0 {
            continue;
        }
        let w = a / (norm * items.len() as f64);
        let mut fam = 0.0;
        for it in items {
            let fwd = forward(&it.input, params)?;
            fam += bce_with_logit(fwd.logit, f.label());
            backward(&it.input, &fwd, params, w * bce_with_logit_grad(fwd.logit, f.label()), &mut grad);
        }
        loss += a * fam / items.len() as f64;
    }
    Ok((loss / norm, grad))
}

/// Quality score for every record, keyed by id.
pub fn score_corpus(corpus: &Corpus, params: &QaParams) -> Result<BTreeMap<String, f64>> {
    params.check_dims(corpus.header())?;
    corpus
        .records()
        .par_iter()
        .map(|r| Ok((r.id.clone(), score_input(&QaInput::from(r), params)?)))
        .collect()
}
