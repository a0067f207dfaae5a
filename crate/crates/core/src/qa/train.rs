use serde::{Deserialize, Serialize};

use super::{qa_loss_and_grad, validate_alpha, Alpha, QaParams};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::forge::{forge, SourceItem};
use crate::numerics::{AdamConfig, AdamState};
use crate::rng::{permutation, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaConfig {
    /// Family weights, `[pos, mix, mask, flip]`.
    pub alpha: Alpha,
    pub rho: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hidden width; `None` means `2d`.
    pub hidden: Option<usize>,
    /// Draw positives from augmented records as well as originals.
    pub augmented_positives: bool,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            alpha: [1.0; 4],
            rho: 0.3,
            batch_size: 32,
            steps: 1500,
            lr: 1e-3,
            seed: 0,
            hidden: None,
            augmented_positives: false,
        }
    }
}

impl QaConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(&self.alpha)?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("QA batch size must be at least 2"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("QA learning rate must be positive"));
        }
        if self.hidden == Some(0) {
            return Err(Error::invalid("QA hidden width must be positive"));
        }
        Ok(())
    }

    pub fn hidden_for(&self, d: usize) -> usize {
        self.hidden.unwrap_or(2 * d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage0Log {
    /// `L_QA` per step; `None` for steps skipped because no weighted family had items.
    pub loss: Vec<Option<f64>>,
}

/// Train the scorer on forged negatives. Reads the corpus, never writes it.
pub fn train_stage0(corpus: &Corpus, config: &QaConfig) -> Result<(QaParams, Stage0Log)> {
    config.validate()?;
    let header = corpus.header();
    let mut params = QaParams::init(header.d, header.d_t, config.hidden_for(header.d), config.seed);
    let pool: Vec<SourceItem> = corpus
        .records()
        .iter()
        .filter(|r| config.augmented_positives || r.is_original())
        .map(SourceItem::from)
        .collect();
    let mut seen = [false; 2];
    pool.iter().for_each(|s| seen[s.input.polarity.min(1) as usize] = true);
    if !(seen[0] && seen[1]) {
        return Err(Error::invalid(
            "stage 0 needs training samples of both polarities",
        ));
    }
    let batch_size = config.batch_size.min(pool.len());

    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let mut log = Stage0Log {
        loss: Vec::with_capacity(config.steps),
    };
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0;
    for step in 0..config.steps {
        if cursor + batch_size > order.len() {
            order = permutation(&mut stream(config.seed, "stage0-epoch", epoch), pool.len());
            epoch += 1;
            cursor = 0;
        }
        let batch: Vec<SourceItem> = order[cursor..cursor + batch_size]
            .iter()
            .map(|&i| pool[i].clone())
            .collect();
        cursor += batch_size;

        let mut rng = stream(config.seed, "stage0-forge", step as u64);
        let forged = forge(&batch, config.rho, &mut rng)?;
        match qa_loss_and_grad(&forged, &params, &config.alpha) {
            Ok((loss, grad)) => {
                adam.step(&mut params.tensors_mut(), &grad.tensors())?;
                log.loss.push(Some(loss));
            }
            Err(Error::Invalid(msg)) if msg.starts_with("no family") => {
                log::debug!("stage 0 step {step} skipped: {msg}");
                log.loss.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((params, log))
}
