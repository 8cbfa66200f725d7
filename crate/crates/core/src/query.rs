//! Profile queries against a panorama file: per-chart probabilities, state
//! history with streamgraph series, most similar dataset cases and batch
//! scoring of whole tables.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::correlation::pearson_complete;
use crate::data::{stats_of, Dataset};
use crate::error::{Error, Result};
use crate::logit::{profile_values, ModelError, Profile};
use crate::radviz::{layout_items, place_anchors, Layout};
use crate::store::{Chart, DatasetFingerprint, PanoramaFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartProbabilities {
    pub title: String,
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
}

fn check_complete(pf: &PanoramaFile, profile: &Profile) -> Result<()> {
    let missing: Vec<String> = pf
        .attributes()
        .into_iter()
        .filter(|a| !profile.contains_key(a))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(ModelError::IncompleteProfile(missing).into())
    }
}

/// Probabilities of `profile` under every chart.
pub fn query(pf: &PanoramaFile, profile: &Profile) -> Result<Vec<ChartProbabilities>> {
    check_complete(pf, profile)?;
    pf.charts
        .iter()
        .map(|c| {
            Ok(ChartProbabilities {
                title: c.spec.title.clone(),
                labels: c.labels(),
                probabilities: c.model.predict(profile)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileState {
    pub values: Profile,
    pub submitted_at: usize,
}

/// States × labels probabilities for one chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub title: String,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLayer {
    pub label: String,
    /// `(y0, y1)` band per submitted state.
    pub bands: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streamgraph {
    pub title: String,
    pub layers: Vec<StreamLayer>,
}

/// Append-only history of submitted profile states.
#[derive(Debug, Clone)]
pub struct QuerySession {
    panorama: Arc<PanoramaFile>,
    history: Vec<ProfileState>,
    trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub history: Vec<ProfileState>,
    pub current: Vec<ChartProbabilities>,
    pub trajectories: Vec<Trajectory>,
    pub streamgraphs: Vec<Streamgraph>,
}

impl QuerySession {
    pub fn new(panorama: Arc<PanoramaFile>) -> Self {
        let trajectories = panorama
            .charts
            .iter()
            .map(|c| Trajectory {
                title: c.spec.title.clone(),
                labels: c.labels(),
                rows: Vec::new(),
            })
            .collect();
        Self {
            panorama,
            history: Vec::new(),
            trajectories,
        }
    }

    pub fn panorama(&self) -> &Arc<PanoramaFile> {
        &self.panorama
    }

    pub fn history(&self) -> &[ProfileState] {
        &self.history
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn last_profile(&self) -> Option<&Profile> {
        self.history.last().map(|s| &s.values)
    }

    /// Queries `profile`, then appends it and its probabilities. A failed
    /// query leaves the session untouched.
    pub fn submit_state(&mut self, profile: Profile) -> Result<Vec<ChartProbabilities>> {
        let result = query(&self.panorama, &profile)?;
        for (t, r) in self.trajectories.iter_mut().zip(&result) {
            t.rows.push(r.probabilities.clone());
        }
        self.history.push(ProfileState {
            values: profile,
            submitted_at: self.history.len(),
        });
        Ok(result)
    }

    /// Stacked per-label bands over the submission index.
    pub fn streamgraphs(&self) -> Vec<Streamgraph> {
        self.trajectories
            .iter()
            .map(|t| {
                let mut layers: Vec<StreamLayer> = t
                    .labels
                    .iter()
                    .map(|l| StreamLayer {
                        label: l.clone(),
                        bands: Vec::with_capacity(t.rows.len()),
                    })
                    .collect();
                for row in &t.rows {
                    let mut base = 0.0;
                    for (layer, p) in layers.iter_mut().zip(row) {
                        layer.bands.push((base, base + p));
                        base += p;
                    }
                }
                Streamgraph {
                    title: t.title.clone(),
                    layers,
                }
            })
            .collect()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let current = self
            .trajectories
            .iter()
            .filter_map(|t| {
                t.rows.last().map(|r| ChartProbabilities {
                    title: t.title.clone(),
                    labels: t.labels.clone(),
                    probabilities: r.clone(),
                })
            })
            .collect();
        SessionSnapshot {
            history: self.history.clone(),
            current,
            trajectories: self.trajectories.clone(),
            streamgraphs: self.streamgraphs(),
        }
    }

    /// `chart,state,label,probability,y0,y1` rows.
    pub fn streamgraph_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["chart", "state", "label", "probability", "y0", "y1"])
            .expect("in-memory write");
        for (t, s) in self.trajectories.iter().zip(self.streamgraphs()) {
            for (state, row) in t.rows.iter().enumerate() {
                for (layer, p) in s.layers.iter().zip(row) {
                    let (y0, y1) = layer.bands[state];
                    w.write_record([
                        t.title.clone(),
                        state.to_string(),
                        layer.label.clone(),
                        p.to_string(),
                        y0.to_string(),
                        y1.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    /// Pearson correlation of standardized attribute vectors.
    Pearson,
    /// Negative absolute z-score distance, used for single-attribute charts.
    NegativeDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarCase {
    pub row_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarCases {
    pub chart: String,
    pub metric: SimilarityMetric,
    pub cases: Vec<SimilarCase>,
    /// Rows skipped for missing chart attributes.
    pub skipped: usize,
    /// Set when the dataset differs from the one the panorama was trained on.
    pub stale_dataset: bool,
}

/// Dataset rows most correlated with `profile` over the chart's attributes,
/// each attribute standardized with the dataset's own mean and std.
pub fn similar_cases(
    ds: Option<&Dataset>,
    fingerprint: Option<&DatasetFingerprint>,
    profile: &Profile,
    chart: &Chart,
    top_n: usize,
) -> Result<SimilarCases> {
    let ds = ds.ok_or(Error::DatasetUnavailable)?;
    let attrs = chart.model.attributes();
    let target = profile_values(attrs, profile)?;
    let (rows, columns) = ds.complete_rows(attrs, None)?;
    let scale: Vec<(f64, f64)> = attrs
        .iter()
        .map(|a| {
            let s = stats_of(ds.attribute(a)?).ok_or_else(|| crate::data::DataError::StatsUnavailable(a.clone()))?;
            Ok((s.mean, s.std))
        })
        .collect::<Result<_>>()?;
    let z = |v: f64, (mean, std): (f64, f64)| if std > 0.0 { (v - mean) / std } else { 0.0 };
    let zp: Vec<f64> = target.iter().zip(&scale).map(|(v, s)| z(*v, *s)).collect();
    let metric = if attrs.len() >= 2 {
        SimilarityMetric::Pearson
    } else {
        SimilarityMetric::NegativeDistance
    };
    let mut cases: Vec<SimilarCase> = (0..rows.len())
        .map(|i| {
            let zr: Vec<f64> = columns.iter().zip(&scale).map(|(c, s)| z(c[i], *s)).collect();
            let similarity = match metric {
                SimilarityMetric::Pearson => pearson_complete(&zp, &zr)?,
                SimilarityMetric::NegativeDistance => {
                    -zp.iter().zip(&zr).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                }
            };
            Ok(SimilarCase {
                row_id: ds.row_ids()[rows[i]].clone(),
                similarity,
            })
        })
        .collect::<Result<_>>()?;
    cases.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.row_id.cmp(&b.row_id))
    });
    cases.truncate(top_n);
    Ok(SimilarCases {
        chart: chart.spec.title.clone(),
        metric,
        cases,
        skipped: ds.n_rows() - rows.len(),
        stale_dataset: fingerprint.is_some_and(|f| *f != DatasetFingerprint::of(ds)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchChart {
    pub title: String,
    pub labels: Vec<String>,
    pub row_ids: Vec<String>,
    pub probabilities: Vec<Vec<f64>>,
    /// Rows skipped for missing chart attributes.
    pub excluded: usize,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub rows: usize,
    pub charts: Vec<BatchChart>,
}

/// Scores every row of `table` under every chart and lays the probability
/// rows out radially. With `color_by`, points take their color from that
/// column: values matching a chart label use the label's index, other values
/// extend the color legend in first-appearance order.
pub fn batch_query(pf: &PanoramaFile, table: &Dataset, color_by: Option<&str>, distortion: f64) -> Result<BatchResult> {
    let missing: Vec<String> = pf
        .attributes()
        .into_iter()
        .filter(|a| table.attribute(a).is_err())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let color_column = match color_by {
        Some(name) => Some(
            table
                .column(name)
                .ok_or_else(|| Error::MissingColumns(vec![name.to_owned()]))?,
        ),
        None => None,
    };
    let charts = pf
        .charts
        .iter()
        .map(|c| {
            let m = c.model.probability_matrix(table)?;
            let ring = place_anchors(&m.labels, &vec![true; m.labels.len()])?;
            let mut legend = m.labels.clone();
            let colors: Option<Vec<usize>> = color_column.map(|col| {
                m.rows
                    .iter()
                    .map(|&r| {
                        let value = col.text(r).unwrap_or_else(|| "NA".into());
                        legend.iter().position(|l| *l == value).unwrap_or_else(|| {
                            legend.push(value);
                            legend.len() - 1
                        })
                    })
                    .collect()
            });
            let points = layout_items(&m.probabilities, &m.row_ids, &ring, colors.as_deref(), distortion)?;
            let mut layout = Layout::new(&ring, points);
            layout.color_legend = legend;
            Ok(BatchChart {
                title: c.spec.title.clone(),
                labels: m.labels,
                row_ids: m.row_ids,
                probabilities: m.probabilities,
                excluded: m.excluded,
                layout,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BatchResult {
        rows: table.n_rows(),
        charts,
    })
}

impl BatchResult {
    /// One row per input row id; one column per chart label, empty where a
    /// chart excluded the row.
    pub fn to_csv(&self, row_ids: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row_id".to_string()];
        for c in &self.charts {
            header.extend(c.labels.iter().map(|l| format!("{}:{l}", c.title)));
        }
        w.write_record(&header).expect("in-memory write");
        let lookup: Vec<BTreeMap<&str, &Vec<f64>>> = self
            .charts
            .iter()
            .map(|c| c.row_ids.iter().map(String::as_str).zip(&c.probabilities).collect())
            .collect();
        for id in row_ids {
            let mut record = vec![id.clone()];
            for (c, map) in self.charts.iter().zip(&lookup) {
                match map.get(id.as_str()) {
                    Some(p) => record.extend(p.iter().map(|v| v.to_string())),
                    None => record.extend(std::iter::repeat_n(String::new(), c.labels.len())),
                }
            }
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
