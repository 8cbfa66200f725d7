//! ROC curves, AUC, Youden cutoffs, confusion matrices and the holdout split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radviz::argmax;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ROC undefined: truth contains a single class")]
    UndefinedRoc,
    #[error("{scores} scores for {truth} truth values")]
    LengthMismatch { scores: usize, truth: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(usize),
    #[error("split ratio must lie in (0, 1), got {0}")]
    Ratio(f64),
    #[error("cannot split {0} row(s) into non-empty train and test sets")]
    TooFewRows(usize),
    #[error("truth label {label} out of range for {labels} labels")]
    LabelRange { label: usize, labels: usize },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above the threshold are called positive.
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl RocPoint {
    pub fn fpr(&self) -> f64 {
        1.0 - self.specificity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub threshold: f64,
    pub youden_j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Points are ordered by ascending threshold. The first point sits at the
/// lowest score, which calls every item positive (TPR = FPR = 1); the last
/// is at `+inf` (TPR = FPR = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub optimal: Cutoff,
    pub positives: usize,
    pub negatives: usize,
}

fn validate(scores: &[f64], truth: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            truth: truth.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let pos = truth.iter().filter(|t| **t).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::UndefinedRoc);
    }
    Ok((pos, neg))
}

/// Sweeps thresholds over the distinct scores. Tied scores form a single
/// step, so the trapezoid area credits ties with one half.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = validate(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Cumulative (tp, fp) counts for thresholds from +inf downwards.
    let mut steps: Vec<(f64, u64, u64)> = vec![(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((s, tp, fp));
    }

    // Trapezoid rule in integer counts: sum of dFP * (TP_a + TP_b), over 2PN.
    let twice_area: u128 = steps
        .windows(2)
        .map(|w| u128::from(w[1].2 - w[0].2) * u128::from(w[0].1 + w[1].1))
        .sum();
    let auc = twice_area as f64 / (2.0 * pos as f64 * neg as f64);

    let points: Vec<RocPoint> = steps
        .iter()
        .rev()
        .map(|&(threshold, tp, fp)| RocPoint {
            threshold,
            sensitivity: tp as f64 / pos as f64,
            specificity: (neg - fp) as f64 / neg as f64,
        })
        .collect();

    let mut optimal = None::<Cutoff>;
    for p in &points {
        let j = p.sensitivity + p.specificity - 1.0;
        // Ascending thresholds: strict improvement keeps the lowest on ties.
        if optimal.is_none_or(|o| j > o.youden_j) {
            optimal = Some(Cutoff {
                threshold: p.threshold,
                youden_j: j,
                sensitivity: p.sensitivity,
                specificity: p.specificity,
            });
        }
    }
    Ok(RocCurve {
        points,
        auc,
        optimal: optimal.expect("at least two points"),
        positives: pos as usize,
        negatives: neg as usize,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half, by direct enumeration of all pairs.
pub fn auc_pairs_oracle(scores: &[f64], truth: &[bool]) -> Result<f64> {
    let (pos, neg) = validate(scores, truth)?;
    let mut twice: u128 = 0;
    for (i, si) in scores.iter().enumerate() {
        if !truth[i] {
            continue;
        }
        for (j, sj) in scores.iter().enumerate() {
            if truth[j] {
                continue;
            }
            twice += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    Ok(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Text and fit statistics shown alongside a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub equation: String,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPointExport {
    /// `null` stands for `+inf`.
    pub t: Option<f64>,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffExport {
    pub t: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocExport {
    pub points: Vec<RocPointExport>,
    pub auc: f64,
    pub optimal: CutoffExport,
    pub model_meta: ModelMeta,
}

impl RocCurve {
    pub fn export(&self, meta: ModelMeta) -> RocExport {
        RocExport {
            points: self
                .points
                .iter()
                .map(|p| RocPointExport {
                    t: p.threshold.is_finite().then_some(p.threshold),
                    tpr: p.sensitivity,
                    fpr: p.fpr(),
                })
                .collect(),
            auc: self.auc,
            optimal: CutoffExport {
                t: self.optimal.threshold,
                j: self.optimal.youden_j,
            },
            model_meta: meta,
        }
    }
}

/// Rows are true labels, columns predicted (argmax, lowest index on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: usize = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total().max(1) as f64
    }
}

pub fn confusion(labels: &[String], truth: &[usize], probabilities: &[Vec<f64>]) -> Result<ConfusionMatrix> {
    if truth.len() != probabilities.len() {
        return Err(EvalError::LengthMismatch {
            scores: probabilities.len(),
            truth: truth.len(),
        });
    }
    let k = labels.len();
    let mut counts = vec![vec![0; k]; k];
    for (&t, row) in truth.iter().zip(probabilities) {
        if t >= k {
            return Err(EvalError::LabelRange { label: t, labels: k });
        }
        counts[t][argmax(row)] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; the test set gets `floor(n * ratio)` rows, at
/// least one. Both index lists come back sorted.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::Ratio(ratio));
    }
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let n_test = ((n as f64 * ratio).floor() as usize).max(1);
    if n_test >= n {
        return Err(EvalError::TooFewRows(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}
