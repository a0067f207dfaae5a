//! Evaluation metrics: binned accuracy, support-weighted precision/recall/F1,
//! MAE, Pearson correlation, and rank-based ROC-AUC.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], gold: &[f64]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} gold values",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty input"));
    }
    Ok(())
}

/// Class of `y` among `k` equal-width bins of `[-1, 1]`. Values on a bin
/// edge fall in the upper bin, so `k = 2` is the `y >= 0` polarity rule.
pub fn bin_class(y: f64, k: usize) -> usize {
    (1..k)
        .filter(|&b| y >= 2.0 * b as f64 / k as f64 - 1.0)
        .count()
}

/// Fraction of samples whose prediction lands in the gold bin.
pub fn acc_k(pred: &[f64], gold: &[f64], k: usize) -> Result<f64> {
    check_pair(pred, gold)?;
    if k < 2 {
        return Err(Error::invalid("acc_k needs k >= 2"));
    }
    if pred.iter().chain(gold).any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::invalid("acc_k values must lie in [-1, 1]"));
    }
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| bin_class(**p, k) == bin_class(**g, k))
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedScores {
    /// Mean per-class recall (balanced accuracy).
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision/recall/F1 averaged with gold-support weights. Classes
/// absent from the gold labels are excluded; a class never predicted has
/// precision 0.
pub fn weighted_scores(pred: &[usize], gold: &[usize]) -> Result<WeightedScores> {
    if pred.len() != gold.len() {
        return Err(Error::invalid("length mismatch between predictions and gold labels"));
    }
    if gold.is_empty() {
        return Err(Error::invalid("empty input"));
    }
    let mut support: BTreeMap<usize, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<usize, usize> = BTreeMap::new();
    let mut correct: BTreeMap<usize, usize> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        *support.entry(g).or_default() += 1;
        *predicted.entry(p).or_default() += 1;
        if p == g {
            *correct.entry(g).or_default() += 1;
        }
    }
    let n = gold.len() as f64;
    let mut out = WeightedScores {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for (&class, &sup) in &support {
        let tp = *correct.get(&class).unwrap_or(&0) as f64;
        let npred = *predicted.get(&class).unwrap_or(&0) as f64;
        let precision = if npred > 0.0 { tp / npred } else { 0.0 };
        let recall = tp / sup as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let w = sup as f64 / n;
        out.precision += w * precision;
        out.recall += w * recall;
        out.f1 += w * f1;
        out.accuracy += recall / support.len() as f64;
    }
    Ok(out)
}

pub fn mae(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_pair(pred, gold)?;
    Ok(pred.iter().zip(gold).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn pearson_corr(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_pair(pred, gold)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gold.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        let (dp, dg) = (p - mp, g - mg);
        sxy += dp * dg;
        sxx += dp * dp;
        syy += dg * dg;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation undefined"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// ROC-AUC as the Mann-Whitney statistic with midranks for ties.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::invalid("length mismatch between scores and labels"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("ROC-AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if positive[o] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
