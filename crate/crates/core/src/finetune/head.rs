use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusHeader, FeatureSample, Verbalizer};
use crate::error::{Error, Result};
use crate::numerics::{gelu, gelu_grad, Matrix};
use crate::snapshot::{NamedArray, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    /// Hidden width; `None` means `2d`.
    pub hidden: Option<usize>,
    /// Number of output positions.
    pub t_max: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            t_max: 4,
            lr: 1e-3,
            steps: 1000,
            batch_size: 32,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("stage 1 batch size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("stage 1 learning rate must be positive"));
        }
        if self.hidden == Some(0) {
            return Err(Error::invalid("head hidden width must be positive"));
        }
        Ok(())
    }
}

/// Input features seen by the head: `[h_v; h_a or 0; h_t_raw]`.
///
/// The polarity condition used by the scorer is left out since it is the
/// label the head has to predict.
pub fn head_input(sample: &FeatureSample) -> Vec<f64> {
    let d = sample.h_v.len();
    let mut x = Vec::with_capacity(2 * d + sample.h_t_raw.len());
    x.extend_from_slice(&sample.h_v);
    match &sample.h_a {
        Some(a) => x.extend_from_slice(a),
        None => x.extend(std::iter::repeat(0.0).take(d)),
    }
    x.extend_from_slice(&sample.h_t_raw);
    x
}

/// One GELU hidden layer feeding `t_max` independent softmax outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateHead {
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    /// `(t_max * vocab) x hidden`, position-major.
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    pub t_max: usize,
    pub vocab: usize,
}

pub(crate) struct HeadForward {
    pub x: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub logits: Vec<Vec<f64>>,
}

impl SurrogateHead {
    pub fn zeros(in_dim: usize, hidden: usize, t_max: usize, vocab: usize) -> Self {
        Self {
            w_in: Matrix::zeros(hidden, in_dim),
            b_in: vec![0.0; hidden],
            w_out: Matrix::zeros(t_max * vocab, hidden),
            b_out: vec![0.0; t_max * vocab],
            t_max,
            vocab,
        }
    }

    /// Input layer uniform in `+-1/sqrt(fan_in)`, output layer zero.
    pub fn init(header: &CorpusHeader, cfg: &HeadConfig, seed: u64) -> Self {
        let in_dim = 2 * header.d + header.d_t;
        let hidden = cfg.hidden.unwrap_or(2 * header.d);
        let mut head = Self::zeros(in_dim, hidden, cfg.t_max, header.vocab_size);
        let mut rng = crate::rng::stream(seed, "head-init", 0);
        let bound = 1.0 / (in_dim as f64).sqrt();
        head.w_in = Matrix::from_fn(hidden, in_dim, |_, _| rng.gen_range(-bound..bound));
        head
    }

    pub fn in_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_in.rows()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_in.as_slice(),
            &self.b_in,
            self.w_out.as_slice(),
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_in.as_mut_slice(),
            &mut self.b_in,
            self.w_out.as_mut_slice(),
            &mut self.b_out,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden(), self.t_max, self.vocab)
    }

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
            for x in t {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn forward_input(&self, x: Vec<f64>) -> Result<HeadForward> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "head expects {} input features, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let pre = self.w_in.affine(&x, &self.b_in);
        let act: Vec<f64> = pre.iter().map(|&z| gelu(z)).collect();
        let flat = self.w_out.affine(&act, &self.b_out);
        let logits = flat.chunks(self.vocab).map(|c| c.to_vec()).collect();
        Ok(HeadForward { x, pre, act, logits })
    }

    /// Per-position logits, `t_max x vocab`.
    pub fn logits(&self, sample: &FeatureSample) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_input(head_input(sample))?.logits)
    }

    /// Accumulate the parameter gradient given `d(loss)/d(logits)`.
    pub(crate) fn backward(&self, fwd: &HeadForward, dlogits: &[Vec<f64>], grad: &mut SurrogateHead) {
        let dflat: Vec<f64> = dlogits.iter().flatten().copied().collect();
        grad.w_out.add_outer(&dflat, &fwd.act, 1.0);
        grad.b_out.iter_mut().zip(&dflat).for_each(|(g, d)| *g += d);
        let mut dact = vec![0.0; self.hidden()];
        self.w_out.add_transpose_mul(&dflat, &mut dact);
        let dpre: Vec<f64> = dact
            .iter()
            .zip(&fwd.pre)
            .map(|(&da, &z)| da * gelu_grad(z))
            .collect();
        grad.w_in.add_outer(&dpre, &fwd.x, 1.0);
        grad.b_in.iter_mut().zip(&dpre).for_each(|(g, d)| *g += d);
    }

    pub fn to_snapshot(&self, header: &CorpusHeader) -> Snapshot {
        let arrays = vec![
            NamedArray {
                name: "w_in".into(),
                shape: vec![self.hidden(), self.in_dim()],
                data: self.w_in.as_slice().to_vec(),
            },
            NamedArray {
                name: "b_in".into(),
                shape: vec![self.hidden()],
                data: self.b_in.clone(),
            },
            NamedArray {
                name: "w_out".into(),
                shape: vec![self.t_max * self.vocab, self.hidden()],
                data: self.w_out.as_slice().to_vec(),
            },
            NamedArray {
                name: "b_out".into(),
                shape: vec![self.t_max, self.vocab],
                data: self.b_out.clone(),
            },
        ];
        Snapshot::new("head", header.clone(), arrays)
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        snap.expect_kind("head")?;
        let w_in = snap.matrix("w_in")?;
        let w_out = snap.matrix("w_out")?;
        let b_out_shape = snap.matrix("b_out")?;
        let (t_max, vocab) = b_out_shape.shape();
        let hidden = w_in.rows();
        let in_dim = w_in.cols();
        let h = &snap.header;
        if in_dim != 2 * h.d + h.d_t || vocab != h.vocab_size || w_out.shape() != (t_max * vocab, hidden) {
            return Err(Error::Shape("head snapshot shapes disagree with its corpus header".into()));
        }
        Ok(Self {
            b_in: snap.vector("b_in", hidden)?,
            b_out: b_out_shape.as_slice().to_vec(),
            w_in,
            w_out,
            t_max,
            vocab,
        })
    }
}

/// Argmax token per supervised position, ties to the lowest index.
pub fn predict_tokens(head: &SurrogateHead, sample: &FeatureSample, positions: usize) -> Result<Vec<usize>> {
    let logits = head.logits(sample)?;
    Ok(logits
        .iter()
        .take(positions)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Decoded sentiment prediction in `[-1, 1]`.
pub fn predict(head: &SurrogateHead, sample: &FeatureSample, verbalizer: &Verbalizer) -> Result<f64> {
    let tokens = predict_tokens(head, sample, verbalizer.supervised_positions)?;
    Ok(verbalizer.decode(&tokens, head.vocab))
}
