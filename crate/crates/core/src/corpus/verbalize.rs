use serde::{Deserialize, Serialize};

use super::IGNORE_INDEX;

/// Token table mapping a sentiment score to a short target sequence.
///
/// Position 0 carries the polarity (0 = negative, any other token =
/// positive). Positions 1 and 2 hold the magnitude `|y|` quantized to
/// `vocab^2` levels as two base-`vocab` digits. One IGNORE position pads
/// the sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verbalizer {
    pub scheme: String,
    pub supervised_positions: usize,
    pub padded_len: usize,
}

pub const SIGN_MAGNITUDE: &str = "sign-magnitude-2digit";

impl Default for Verbalizer {
    fn default() -> Self {
        Self {
            scheme: SIGN_MAGNITUDE.into(),
            supervised_positions: 3,
            padded_len: 4,
        }
    }
}

impl Verbalizer {
    fn levels(vocab: usize) -> usize {
        vocab * vocab
    }

    pub fn encode(&self, y: f64, vocab: usize) -> Vec<i64> {
        let sign = if y >= 0.0 { 1 } else { 0 };
        let levels = Self::levels(vocab);
        let level = ((y.abs() * levels as f64).floor() as usize).min(levels - 1);
        let mut out = vec![sign, (level / vocab) as i64, (level % vocab) as i64];
        out.resize(self.padded_len.max(3), IGNORE_INDEX);
        out
    }

    /// Inverse of [`encode`](Self::encode) up to quantization: the centre of
    /// the magnitude level, signed by the polarity token.
    pub fn decode(&self, tokens: &[usize], vocab: usize) -> f64 {
        let levels = Self::levels(vocab) as f64;
        let hi = tokens.get(1).copied().unwrap_or(0).min(vocab - 1);
        let lo = tokens.get(2).copied().unwrap_or(0).min(vocab - 1);
        let magnitude = ((hi * vocab + lo) as f64 + 0.5) / levels;
        if tokens.first().copied().unwrap_or(0) == 0 {
            -magnitude
        } else {
            magnitude
        }
    }
}
