//! Radial anchor geometry shared by the attribute view and the item
//! (probability) view.
//!
//! Anchors sit on the unit circle. A weight vector is mapped to the weighted
//! barycenter of the visible anchors, weights raised to the distortion
//! exponent first.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{self, attr_vs_attr, CorrelationError, CorrelationPanorama, LabelFocus, RankedAttribute};
use crate::data::Dataset;

pub const SIZE_MIN: f64 = 4.0;
pub const SIZE_MAX: f64 = 18.0;
/// Marker size for items in the probability view.
pub const ITEM_SIZE: f64 = 6.0;
/// Row-sum tolerance accepted by [`layout_items`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadvizError {
    #[error("no visible anchors")]
    EmptyRing,
    #[error("visibility mask has {mask} entries for {labels} labels")]
    MaskMismatch { mask: usize, labels: usize },
    #[error("weight {index} is {value}; weights must be finite and nonnegative")]
    Domain { index: usize, value: f64 },
    #[error("expected {expected} weights, got {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("distortion exponent must be >= 1, got {0}")]
    Distortion(f64),
    #[error("anchor labels {ring:?} do not match panorama labels {panorama:?}")]
    LabelMismatch {
        ring: Vec<String>,
        panorama: Vec<String>,
    },
    #[error("row {row} sums to {sum}, not 1")]
    Normalization { row: usize, sum: f64 },
    #[error("{ids} ids for {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("invalid anchor order {0:?}")]
    Order(Vec<usize>),
    #[error("unknown focus `{0}`")]
    UnknownFocus(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

pub type Result<T, E = RadvizError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub label: String,
    /// Position of this label in the weight vectors.
    pub label_index: usize,
    /// Radians; `None` for hidden anchors.
    pub angle: Option<f64>,
    pub visible: bool,
}

impl Anchor {
    pub fn position(&self) -> Option<(f64, f64)> {
        self.angle.map(|a| (a.cos(), a.sin()))
    }
}

/// Anchors in display order around the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRing {
    pub anchors: Vec<Anchor>,
    pub radius: f64,
}

/// Spaces the visible anchors evenly, the first one at the top of the circle.
pub fn place_anchors(labels: &[String], visible: &[bool]) -> Result<AnchorRing> {
    let order: Vec<usize> = (0..labels.len()).collect();
    place_anchors_ordered(labels, visible, &order)
}

/// Like [`place_anchors`] with a manual display order (a permutation of
/// label indices).
pub fn place_anchors_ordered(labels: &[String], visible: &[bool], order: &[usize]) -> Result<AnchorRing> {
    if visible.len() != labels.len() {
        return Err(RadvizError::MaskMismatch {
            mask: visible.len(),
            labels: labels.len(),
        });
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..labels.len()).collect::<Vec<_>>() {
        return Err(RadvizError::Order(order.to_vec()));
    }
    let v = visible.iter().filter(|&&b| b).count();
    if v == 0 {
        return Err(RadvizError::EmptyRing);
    }
    let mut slot = 0;
    let anchors = order
        .iter()
        .map(|&j| {
            let angle = visible[j].then(|| {
                let a = (FRAC_PI_2 + TAU * slot as f64 / v as f64).rem_euclid(TAU);
                slot += 1;
                a
            });
            Anchor {
                label: labels[j].clone(),
                label_index: j,
                angle,
                visible: visible[j],
            }
        })
        .collect();
    Ok(AnchorRing { anchors, radius: 1.0 })
}

impl AnchorRing {
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.anchors.len()];
        for a in &self.anchors {
            out[a.label_index] = a.label.clone();
        }
        out
    }

    pub fn n_labels(&self) -> usize {
        self.anchors.len()
    }

    /// Anchor position for label index `j`.
    pub fn anchor_position(&self, j: usize) -> Option<(f64, f64)> {
        self.anchors.iter().find(|a| a.label_index == j)?.position()
    }
}

/// Weighted barycenter of the visible anchors. Hidden anchors are ignored and
/// an all-zero effective weight sum maps to the origin.
pub fn radviz_map(weights: &[f64], ring: &AnchorRing, distortion: f64) -> Result<(f64, f64)> {
    if weights.len() != ring.n_labels() {
        return Err(RadvizError::WeightCount {
            expected: ring.n_labels(),
            found: weights.len(),
        });
    }
    if !(distortion >= 1.0 && distortion.is_finite()) {
        return Err(RadvizError::Distortion(distortion));
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
    {
        return Err(RadvizError::Domain { index, value });
    }
    let powered: Vec<(f64, (f64, f64))> = ring
        .anchors
        .iter()
        .filter(|a| a.visible)
        .filter_map(|a| {
            let w = weights[a.label_index];
            let w = if distortion == 1.0 { w } else { w.powf(distortion) };
            Some((w, a.position()?))
        })
        .collect();
    let total: f64 = powered.iter().map(|(w, _)| w).sum();
    if total == 0.0 {
        return Ok((0.0, 0.0));
    }
    // Normalizing first keeps a one-hot vector exactly on its anchor.
    let (mut x, mut y) = (0.0, 0.0);
    for (w, (ax, ay)) in powered {
        let u = w / total;
        x += u * ax;
        y += u * ay;
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    /// Index into the layout's color legend.
    pub color_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorExport {
    pub label: String,
    pub angle: Option<f64>,
    pub visible: bool,
}

/// Layout payload consumed by the UI and written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub anchors: Vec<AnchorExport>,
    pub points: Vec<ProjectedPoint>,
    /// Names for `color_label` indices; the ring labels unless recolored.
    pub color_legend: Vec<String>,
}

impl Layout {
    pub fn new(ring: &AnchorRing, points: Vec<ProjectedPoint>) -> Self {
        Self {
            anchors: ring
                .anchors
                .iter()
                .map(|a| AnchorExport {
                    label: a.label.clone(),
                    angle: a.angle,
                    visible: a.visible,
                })
                .collect(),
            points,
            color_legend: ring.labels(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout serializes")
    }
}

/// Size-encoding perspective for the attribute view.
#[derive(Debug, Clone, Copy)]
pub enum LayoutFocus<'a> {
    Global,
    Label(usize),
    /// Sizes follow correlation with this attribute, computed on `dataset`.
    Attribute { name: &'a str, dataset: &'a Dataset },
}

impl<'a> LayoutFocus<'a> {
    /// Resolves a user-facing focus string: empty or `global`, then a label
    /// name, then an attribute name.
    pub fn parse(text: &str, panorama: &CorrelationPanorama, dataset: &'a Dataset) -> Result<Self> {
        if text.is_empty() || text.eq_ignore_ascii_case("global") {
            return Ok(Self::Global);
        }
        if let Some(j) = panorama.label_index(text) {
            return Ok(Self::Label(j));
        }
        if let Some(name) = dataset.attribute_names().find(|a| *a == text) {
            return Ok(Self::Attribute { name, dataset });
        }
        Err(RadvizError::UnknownFocus(text.to_owned()))
    }
}

pub fn scale_size(score: f64) -> f64 {
    SIZE_MIN + (SIZE_MAX - SIZE_MIN) * score.clamp(0.0, 1.0)
}

/// Size score of every panorama attribute under `focus`; the focused
/// attribute itself scores 1.
fn focus_scores(p: &CorrelationPanorama, focus: LayoutFocus<'_>) -> Result<Vec<f64>> {
    let scores: Vec<f64> = match focus {
        LayoutFocus::Global => p
            .matrix
            .iter()
            .map(|r| correlation::score(r, LabelFocus::Global))
            .collect(),
        LayoutFocus::Label(j) => {
            if j >= p.labels.len() {
                return Err(CorrelationError::BadFocus {
                    index: j,
                    labels: p.labels.len(),
                }
                .into());
            }
            p.matrix.iter().map(|r| r[j].abs()).collect()
        }
        LayoutFocus::Attribute { name, dataset } => {
            let others = attr_vs_attr(dataset, name)?;
            p.attributes
                .iter()
                .map(|a| {
                    if a == name {
                        1.0
                    } else {
                        others
                            .iter()
                            .find(|(o, _)| o == a)
                            .map_or(0.0, |(_, r)| r.abs())
                    }
                })
                .collect()
        }
    };
    Ok(scores)
}

/// Projects each panorama attribute using its |r| row as weights. Size
/// encodes the focus score, color the dominant label.
pub fn layout_attributes(
    p: &CorrelationPanorama,
    ring: &AnchorRing,
    focus: LayoutFocus<'_>,
    distortion: f64,
) -> Result<Vec<ProjectedPoint>> {
    if ring.labels() != p.labels {
        return Err(RadvizError::LabelMismatch {
            ring: ring.labels(),
            panorama: p.labels.clone(),
        });
    }
    let scores = focus_scores(p, focus)?;
    p.attributes
        .iter()
        .zip(&p.matrix)
        .zip(scores)
        .zip(&p.dominant_label)
        .map(|(((name, row), score), &color)| {
            let weights: Vec<f64> = row.iter().map(|r| r.abs()).collect();
            let (x, y) = radviz_map(&weights, ring, distortion)?;
            Ok(ProjectedPoint {
                id: name.clone(),
                x,
                y,
                size: scale_size(score),
                color_label: color,
            })
        })
        .collect()
}

/// Projects an items × labels probability matrix. Color is the true label
/// when given, otherwise the predicted argmax (lowest index on ties).
pub fn layout_items(
    probabilities: &[Vec<f64>],
    ids: &[String],
    ring: &AnchorRing,
    truth: Option<&[usize]>,
    distortion: f64,
) -> Result<Vec<ProjectedPoint>> {
    if ids.len() != probabilities.len() {
        return Err(RadvizError::IdCount {
            ids: ids.len(),
            rows: probabilities.len(),
        });
    }
    probabilities
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(RadvizError::Normalization { row: i, sum });
            }
            let (x, y) = radviz_map(row, ring, distortion)?;
            Ok(ProjectedPoint {
                id: ids[i].clone(),
                x,
                y,
                size: ITEM_SIZE,
                color_label: truth.map_or_else(|| argmax(row), |t| t[i]),
            })
        })
        .collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Panorama, focus ranking and attribute layout in one payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeView {
    pub panorama: CorrelationPanorama,
    pub focus: String,
    pub distortion: f64,
    pub ranking: Vec<RankedAttribute>,
    pub layout: Layout,
}

/// Lays out `panorama` with the named labels hidden. `focus` is resolved as
/// in [`LayoutFocus::parse`].
pub fn attribute_view(
    panorama: CorrelationPanorama,
    dataset: &Dataset,
    focus: &str,
    hidden: &[String],
    distortion: f64,
) -> Result<AttributeView> {
    if let Some(bad) = hidden.iter().find(|h| panorama.label_index(h).is_none()) {
        return Err(RadvizError::UnknownLabel(bad.clone()));
    }
    let visible: Vec<bool> = panorama.labels.iter().map(|l| !hidden.contains(l)).collect();
    let ring = place_anchors(&panorama.labels, &visible)?;
    let parsed = LayoutFocus::parse(focus, &panorama, dataset)?;
    let scores = focus_scores(&panorama, parsed)?;
    let mut ranking: Vec<RankedAttribute> = panorama
        .attributes
        .iter()
        .zip(scores)
        .map(|(a, score)| RankedAttribute {
            attribute: a.clone(),
            score,
        })
        .collect();
    ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.attribute.cmp(&b.attribute)));
    let points = layout_attributes(&panorama, &ring, parsed, distortion)?;
    Ok(AttributeView {
        focus: if focus.is_empty() { "global".into() } else { focus.to_owned() },
        distortion,
        ranking,
        layout: Layout::new(&ring, points),
        panorama,
    })
}
