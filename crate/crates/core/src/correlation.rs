//! Attribute-versus-label correlation panorama and attribute rankings.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, TargetDecomposition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("correlation needs at least 2 complete pairs, found {0}")]
    InsufficientData(usize),
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no eligible attributes for the panorama")]
    EmptyPanorama,
    #[error("label index {index} out of range for {labels} labels")]
    BadFocus { index: usize, labels: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = CorrelationError> = std::result::Result<T, E>;

/// Pearson product-moment correlation over pairs where both cells are present.
/// Returns 0 when either side has zero variance.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    pearson_complete(&xs, &ys)
}

pub fn pearson_complete(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrelationError::InsufficientData(x.len()));
    }
    if is_constant(x) || is_constant(y) {
        return Ok(0.0);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|a| *a == v[0])
}

/// m attributes × k labels matrix of Pearson coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPanorama {
    pub target: String,
    pub labels: Vec<String>,
    pub attributes: Vec<String>,
    /// Row-major: one row per attribute, one column per label.
    pub matrix: Vec<Vec<f64>>,
    pub dominant_label: Vec<usize>,
}

impl CorrelationPanorama {
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn row(&self, attribute: usize) -> &[f64] {
        &self.matrix[attribute]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("panorama serializes")
    }
}

/// Index of the largest |r|, lowest index on ties.
pub fn dominant(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, r) in row.iter().enumerate() {
        if r.abs() > row[best].abs() {
            best = j;
        }
    }
    best
}

/// Correlates every eligible numeric attribute with each label's presence
/// vector. The target column and `excluded` attributes are skipped.
pub fn build_panorama(
    ds: &Dataset,
    dec: &TargetDecomposition,
    excluded: &HashSet<String>,
) -> Result<CorrelationPanorama> {
    let attributes: Vec<String> = ds
        .attribute_names()
        .filter(|a| *a != dec.target && !excluded.contains(*a))
        .map(str::to_owned)
        .collect();
    if attributes.is_empty() {
        return Err(CorrelationError::EmptyPanorama);
    }
    let presence: Vec<Vec<Option<f64>>> = (0..dec.n_labels())
        .map(|j| dec.presence_column(j).into_iter().map(Some).collect())
        .collect();
    let matrix = attributes
        .par_iter()
        .map(|name| {
            let cells = ds.attribute(name)?;
            let values: Vec<Option<f64>> = dec.rows.iter().map(|&i| cells[i]).collect();
            presence.iter().map(|p| pearson(&values, p)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let dominant_label = matrix.iter().map(|r| dominant(r)).collect();
    Ok(CorrelationPanorama {
        target: dec.target.clone(),
        labels: dec.labels.clone(),
        attributes,
        matrix,
        dominant_label,
    })
}

/// Correlation of `focus` with every other numeric attribute, in column order.
/// The focus itself and the designated target are omitted.
pub fn attr_vs_attr(ds: &Dataset, focus: &str) -> Result<Vec<(String, f64)>> {
    let x = ds.attribute(focus)?;
    ds.attribute_names()
        .filter(|a| *a != focus && Some(*a) != ds.target())
        .map(|a| Ok((a.to_owned(), pearson(x, ds.attribute(a)?)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelFocus {
    Global,
    Label(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAttribute {
    pub attribute: String,
    pub score: f64,
}

/// Attributes by descending |r|, either the best label (`Global`) or one label.
pub fn rank_attributes(p: &CorrelationPanorama, focus: LabelFocus) -> Result<Vec<RankedAttribute>> {
    if p.attributes.is_empty() {
        return Err(CorrelationError::EmptyPanorama);
    }
    if let LabelFocus::Label(j) = focus {
        if j >= p.labels.len() {
            return Err(CorrelationError::BadFocus {
                index: j,
                labels: p.labels.len(),
            });
        }
    }
    let mut ranked: Vec<RankedAttribute> = p
        .attributes
        .iter()
        .zip(&p.matrix)
        .map(|(a, row)| RankedAttribute {
            attribute: a.clone(),
            score: score(row, focus),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.attribute.cmp(&b.attribute))
    });
    Ok(ranked)
}

pub(crate) fn score(row: &[f64], focus: LabelFocus) -> f64 {
    match focus {
        LabelFocus::Global => row.iter().fold(0.0, |m, r| m.max(r.abs())),
        LabelFocus::Label(j) => row[j].abs(),
    }
}
