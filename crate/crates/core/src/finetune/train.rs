use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::head::{head_input, HeadConfig, SurrogateHead};
use super::{per_sample_loss, per_sample_loss_grad, weighted_batch_loss};
use crate::corpus::{Corpus, FeatureSample};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState};
use crate::qa::WeightFile;
use crate::rng::{permutation, stream};

/// Where per-sample weights come from.
#[derive(Debug, Clone)]
pub enum WeightSource {
    /// Every sample at weight 1.
    Uniform,
    File(WeightFile),
}

/// Which records of the corpus take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSelection {
    pub originals: bool,
    pub augmented: bool,
    /// Fraction of originals kept (per polarity, seeded); augments are unaffected.
    pub original_fraction: f64,
}

impl Default for TrainSelection {
    fn default() -> Self {
        Self {
            originals: true,
            augmented: true,
            original_fraction: 1.0,
        }
    }
}

impl TrainSelection {
    pub fn validate(&self) -> Result<()> {
        if !(self.originals || self.augmented) {
            return Err(Error::invalid("training selection is empty"));
        }
        if !(self.original_fraction > 0.0 && self.original_fraction <= 1.0) {
            return Err(Error::invalid("original_fraction must be in (0, 1]"));
        }
        Ok(())
    }

    /// Indices of the selected records.
    pub fn apply(&self, corpus: &Corpus, seed: u64) -> Result<Vec<usize>> {
        self.validate()?;
        let mut keep_original = vec![true; corpus.len()];
        if self.original_fraction < 1.0 {
            for pol in 0..2u8 {
                let idx: Vec<usize> = corpus
                    .records()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.is_original() && r.polarity == pol)
                    .map(|(i, _)| i)
                    .collect();
                let n_keep = ((idx.len() as f64 * self.original_fraction).round() as usize).max(1);
                let perm = permutation(&mut stream(seed, "original-subset", pol as u64), idx.len());
                for &p in &perm[n_keep.min(idx.len())..] {
                    keep_original[idx[p]] = false;
                }
            }
        }
        Ok(corpus
            .records()
            .iter()
            .enumerate()
            .filter(|(i, r)| {
                if r.is_original() {
                    self.originals && keep_original[*i]
                } else {
                    self.augmented
                }
            })
            .map(|(i, _)| i)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub head: HeadConfig,
    pub seed: u64,
    pub selection: TrainSelection,
    pub weighted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainRunConfig,
    /// `L_task` per step.
    pub loss: Vec<f64>,
    pub head: SurrogateHead,
    pub n_train: usize,
}

fn weight_of(source: &WeightSource, sample: &FeatureSample) -> Result<f64> {
    match source {
        WeightSource::Uniform => Ok(1.0),
        WeightSource::File(f) => f.weight(&sample.id).ok_or_else(|| {
            Error::Runtime(format!("weight file has no entry for sample {}", sample.id))
        }),
    }
}

/// Minibatch Adam on the weighted token loss. The corpus and any scorer
/// parameters stay untouched; only the head is updated.
pub fn train_stage1(
    corpus: &Corpus,
    weights: &WeightSource,
    head_cfg: &HeadConfig,
    selection: &TrainSelection,
    seed: u64,
) -> Result<TrainRun> {
    head_cfg.validate()?;
    if let WeightSource::File(f) = weights {
        f.check_corpus(corpus)?;
    }
    let header = corpus.header();
    let indices = selection.apply(corpus, seed)?;
    if indices.is_empty() {
        return Err(Error::invalid("no training samples selected"));
    }
    let records = corpus.records();
    let mut sample_weights = Vec::with_capacity(indices.len());
    for &i in &indices {
        let r = &records[i];
        if r.target_tokens.len() != head_cfg.t_max {
            return Err(Error::Shape(format!(
                "record {}: {} target positions but head has t_max = {}",
                r.id,
                r.target_tokens.len(),
                head_cfg.t_max
            )));
        }
        sample_weights.push(weight_of(weights, r)?);
    }

    let mut head = SurrogateHead::init(header, head_cfg, seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(head_cfg.lr));
    let batch_size = head_cfg.batch_size.min(indices.len());
    let mut loss_trace = Vec::with_capacity(head_cfg.steps);
    let mut order = Vec::new();
    let (mut cursor, mut epoch) = (0, 0);

    for _ in 0..head_cfg.steps {
        if cursor + batch_size > order.len() {
            order = permutation(&mut stream(seed, "stage1-epoch", epoch), indices.len());
            epoch += 1;
            cursor = 0;
        }
        let batch = &order[cursor..cursor + batch_size];
        cursor += batch_size;

        let samples: Vec<&FeatureSample> = batch.iter().map(|&b| &records[indices[b]]).collect();
        let ws: Vec<f64> = batch.iter().map(|&b| sample_weights[b]).collect();
        let (loss, grad) = task_loss_and_grad(&head, &samples, &ws)?;
        loss_trace.push(loss);
        adam.step(&mut head.tensors_mut(), &grad.tensors())?;
    }

    Ok(TrainRun {
        config: TrainRunConfig {
            head: head_cfg.clone(),
            seed,
            selection: *selection,
            weighted: matches!(weights, WeightSource::File(_)),
        },
        loss: loss_trace,
        head,
        n_train: indices.len(),
    })
}

/// JSONL of `{step, loss}`.
pub fn write_run_log(run: &TrainRun, path: impl AsRef<Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Line {
        step: usize,
        loss: f64,
    }
    let path = path.as_ref();
    let mut out = Vec::new();
    for (step, &loss) in run.loss.iter().enumerate() {
        serde_json::to_writer(&mut out, &Line { step, loss })?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Loss and gradient of `L_task` for an explicit batch; used by tests and
/// the gradient checks.
pub fn task_loss_and_grad(
    head: &SurrogateHead,
    batch: &[&FeatureSample],
    weights: &[f64],
) -> Result<(f64, SurrogateHead)> {
    let mut grad = head.zeros_like();
    let mut losses = Vec::with_capacity(batch.len());
    for (s, &w) in batch.iter().zip(weights) {
        let fwd = head.forward_input(head_input(s))?;
        losses.push(per_sample_loss(&fwd.logits, &s.target_tokens)?);
        let scale = w / batch.len() as f64;
        let dlogits: Vec<Vec<f64>> = per_sample_loss_grad(&fwd.logits, &s.target_tokens)?
            .into_iter()
            .map(|row| row.into_iter().map(|g| g * scale).collect())
            .collect();
        head.backward(&fwd, &dlogits, &mut grad);
    }
    Ok((weighted_batch_loss(&losses, weights)?, grad))
}
