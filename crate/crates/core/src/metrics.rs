//! Multi-label evaluation: Jaccard score, micro/macro F1, per-emotion F1.
//!
//! Zero-denominator conventions live in this module only:
//! a sample with empty gold and empty predictions has Jaccard 1, micro F1
//! over no positive decisions is 1, and an emotion with no support and no
//! predictions has F1 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

const EMPTY_JACCARD: f64 = 1.0;
const EMPTY_MICRO_F1: f64 = 1.0;
const EMPTY_LABEL_F1: f64 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("gold has {gold} rows but predictions have {pred}")]
    RowMismatch { gold: usize, pred: usize },
    #[error("row {row}: gold has {gold} columns but predictions have {pred}")]
    ColumnMismatch { row: usize, gold: usize, pred: usize },
    #[error("threshold {0} is not in (0, 1)")]
    Threshold(f64),
    #[error("nothing to evaluate")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub jaccard: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_emotion_f1: Vec<f64>,
    pub threshold: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize, empty: f64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        empty
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Scores binary predictions against binary gold.
pub fn evaluate_binary(
    gold: &[Vec<u8>],
    pred: &[Vec<u8>],
    threshold: f64,
) -> Result<EvaluationReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::RowMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let n = gold.first().ok_or(MetricsError::Empty)?.len();
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut fn_ = vec![0usize; n];
    let mut jaccard = 0.0;
    for (row, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != n || p.len() != n {
            return Err(MetricsError::ColumnMismatch {
                row,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for j in 0..n {
            let (a, b) = (g[j] != 0, p[j] != 0);
            match (a, b) {
                (true, true) => tp[j] += 1,
                (false, true) => fp[j] += 1,
                (true, false) => fn_[j] += 1,
                (false, false) => {}
            }
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        jaccard += if union == 0 {
            EMPTY_JACCARD
        } else {
            inter as f64 / union as f64
        };
    }
    let per_emotion_f1: Vec<f64> = (0..n)
        .map(|j| f1(tp[j], fp[j], fn_[j], EMPTY_LABEL_F1))
        .collect();
    let sum = |v: &[usize]| v.iter().sum::<usize>();
    Ok(EvaluationReport {
        jaccard: jaccard / gold.len() as f64,
        micro_f1: f1(sum(&tp), sum(&fp), sum(&fn_), EMPTY_MICRO_F1),
        macro_f1: per_emotion_f1.iter().sum::<f64>() / n as f64,
        per_emotion_f1,
        threshold,
    })
}

/// Binarizes `probs >= threshold` and scores against `gold`.
pub fn evaluate(
    gold: &[Vec<u8>],
    probs: &[Vec<f64>],
    threshold: f64,
) -> Result<EvaluationReport, MetricsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::Threshold(threshold));
    }
    let pred: Vec<Vec<u8>> = probs
        .iter()
        .map(|r| r.iter().map(|&p| u8::from(p >= threshold)).collect())
        .collect();
    evaluate_binary(gold, &pred, threshold)
}
