//! Chart specifications, trained chart models and the train/evaluate report.
//!
//! A chart with one label is a binary "label versus rest" model. A chart with
//! two or more labels keeps only rows carrying one of them and fits the
//! multinomial model, the last listed label being the reference.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{decompose_target, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, roc_curve, split, ConfusionMatrix, ModelMeta, RocExport};
use crate::logit::{fit_binary, fit_multinomial, BinaryLogitModel, Design, FitConfig, MultinomialModel, Profile};
use crate::radviz::{layout_items, place_anchors, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub title: String,
    pub target: String,
    pub labels: Vec<String>,
    pub attributes: Vec<String>,
}

impl ChartSpec {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Spec("no explanatory attributes selected".into()));
        }
        if self.labels.is_empty() {
            return Err(Error::Spec("no labels selected".into()));
        }
        if ds.column(&self.target).is_none() {
            return Err(Error::Spec(format!("unknown target `{}`", self.target)));
        }
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if a == &self.target {
                return Err(Error::Spec(format!("target `{a}` cannot be an explanatory attribute")));
            }
            if !seen.insert(a) {
                return Err(Error::Spec(format!("attribute `{a}` listed twice")));
            }
            match ds.column(a) {
                None => return Err(Error::Spec(format!("unknown attribute `{a}`"))),
                Some(c) if !c.is_numeric() => {
                    return Err(Error::Spec(format!("attribute `{a}` is not numeric")))
                }
                _ => {}
            }
        }
        let mut seen = HashSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(Error::Spec(format!("label `{l}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 1
    }
}

pub fn rest_label(label: &str) -> String {
    format!("not {label}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartModel {
    /// Label versus rest; probabilities are `(p, 1 - p)`.
    Binary {
        positive: String,
        negative: String,
        model: BinaryLogitModel,
    },
    Multinomial { model: MultinomialModel },
}

impl ChartModel {
    pub fn labels(&self) -> Vec<String> {
        match self {
            Self::Binary { positive, negative, .. } => vec![positive.clone(), negative.clone()],
            Self::Multinomial { model } => model.labels.clone(),
        }
    }

    pub fn attributes(&self) -> &[String] {
        match self {
            Self::Binary { model, .. } => &model.attributes,
            Self::Multinomial { model } => &model.attributes,
        }
    }

    pub fn predict_row(&self, raw: &[f64]) -> Vec<f64> {
        match self {
            Self::Binary { model, .. } => {
                let p = model.predict_row(raw);
                vec![p, 1.0 - p]
            }
            Self::Multinomial { model } => model.predict_row(raw),
        }
    }

    pub fn predict(&self, profile: &Profile) -> Result<Vec<f64>> {
        Ok(match self {
            Self::Binary { model, .. } => {
                let p = model.predict_binary(profile)?;
                vec![p, 1.0 - p]
            }
            Self::Multinomial { model } => model.predict_multinomial(profile)?,
        })
    }

    pub fn submodels(&self) -> Vec<&BinaryLogitModel> {
        match self {
            Self::Binary { model, .. } => vec![model],
            Self::Multinomial { model } => model.submodels.iter().collect(),
        }
    }

    pub fn converged(&self) -> bool {
        self.submodels().iter().all(|m| m.diagnostics.converged)
    }

    /// Equation and fit p-value backing the curve of label `j`.
    pub fn meta(&self, j: usize) -> ModelMeta {
        match self {
            Self::Binary { model, .. } => ModelMeta {
                equation: model.equation(),
                p_value: Some(model.diagnostics.p_value),
            },
            Self::Multinomial { model } => match model.submodels.get(j) {
                Some(m) => ModelMeta {
                    equation: m.equation(),
                    p_value: Some(m.diagnostics.p_value),
                },
                None => ModelMeta {
                    equation: format!("reference label `{}` (z = 0)", model.reference_label()),
                    p_value: None,
                },
            },
        }
    }

    /// Probability rows over the dataset rows that have every model attribute.
    pub fn probability_matrix(&self, ds: &Dataset) -> Result<ProbabilityMatrix> {
        let (rows, columns) = ds.complete_rows(self.attributes(), None)?;
        let design = Design::new(self.attributes().to_vec(), columns, rows.len())?;
        Ok(ProbabilityMatrix {
            labels: self.labels(),
            row_ids: rows.iter().map(|&i| ds.row_ids()[i].clone()).collect(),
            rows: rows.clone(),
            probabilities: (0..design.n_rows()).map(|i| self.predict_row(&design.row(i))).collect(),
            excluded: ds.n_rows() - rows.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub labels: Vec<String>,
    pub row_ids: Vec<String>,
    /// Dataset row index of each probability row.
    pub rows: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
    /// Rows skipped for missing model attributes.
    pub excluded: usize,
}

/// Complete-case rows eligible for a chart with their label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartData {
    pub labels: Vec<String>,
    pub binary: bool,
    pub rows: Vec<usize>,
    pub truth: Vec<usize>,
    pub design: Design,
}

pub fn chart_data(ds: &Dataset, spec: &ChartSpec) -> Result<ChartData> {
    spec.validate(ds)?;
    let dec = decompose_target(ds, &spec.target)?;
    for l in &spec.labels {
        if dec.label_index(l).is_none() {
            return Err(Error::Spec(format!("label `{l}` not found in target `{}`", spec.target)));
        }
    }
    let (labels, candidates, truth_of): (Vec<String>, Vec<usize>, BTreeMap<usize, usize>) = if spec.is_binary() {
        let positive = dec.label_index(&spec.labels[0]).expect("checked");
        let truth = dec
            .rows
            .iter()
            .zip(&dec.assignment)
            .map(|(&r, &a)| (r, usize::from(a != positive)))
            .collect();
        (
            vec![spec.labels[0].clone(), rest_label(&spec.labels[0])],
            dec.rows.clone(),
            truth,
        )
    } else {
        let r = dec.restrict(&spec.labels)?;
        let truth = r.rows.iter().copied().zip(r.assignment.iter().copied()).collect();
        (spec.labels.clone(), r.rows, truth)
    };
    let (rows, columns) = ds.complete_rows(&spec.attributes, Some(&candidates))?;
    let truth = rows.iter().map(|r| truth_of[r]).collect();
    let design = Design::new(spec.attributes.clone(), columns, rows.len())?;
    Ok(ChartData {
        labels,
        binary: spec.is_binary(),
        rows,
        truth,
        design,
    })
}

impl ChartData {
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            labels: self.labels.clone(),
            binary: self.binary,
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            truth: idx.iter().map(|&i| self.truth[i]).collect(),
            design: self.design.select_rows(idx),
        }
    }

    pub fn fit(&self, cfg: &FitConfig) -> Result<ChartModel> {
        if self.binary {
            let y: Vec<bool> = self.truth.iter().map(|t| *t == 0).collect();
            Ok(ChartModel::Binary {
                positive: self.labels[0].clone(),
                negative: self.labels[1].clone(),
                model: fit_binary(&self.design, &y, cfg)?,
            })
        } else {
            Ok(ChartModel::Multinomial {
                model: fit_multinomial(&self.design, &self.truth, &self.labels, cfg)?,
            })
        }
    }

    /// Attribute means over the chart rows, used as query defaults.
    pub fn means(&self) -> BTreeMap<String, f64> {
        self.design
            .names
            .iter()
            .zip(&self.design.columns)
            .map(|(n, c)| (n.clone(), c.iter().sum::<f64>() / c.len().max(1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    /// Fraction held out for testing; `None` evaluates on the training rows.
    pub split: Option<f64>,
    pub seed: u64,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self { split: Some(0.2), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRoc {
    pub label: String,
    pub roc: Option<RocExport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelSummary {
    pub label: String,
    pub equation: String,
    pub p_value: f64,
    pub lr_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub ratio: Option<f64>,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub evaluated_on: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub chart: ChartSpec,
    pub labels: Vec<String>,
    pub model: ChartModel,
    pub submodels: Vec<SubmodelSummary>,
    pub split: SplitSummary,
    pub rocs: Vec<LabelRoc>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

/// Held-out predictions kept alongside a report for the item view.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub row_ids: Vec<String>,
    pub truth: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn lorrviz(&self, distortion: f64) -> Result<Layout> {
        let ring = place_anchors(&self.labels, &vec![true; self.labels.len()])?;
        let points = layout_items(&self.probabilities, &self.row_ids, &ring, Some(&self.truth), distortion)?;
        Ok(Layout::new(&ring, points))
    }
}

/// Fits a chart on the training split and evaluates ROC curves (one per
/// label, scored by that label's probability) and the confusion matrix on
/// the held-out rows.
pub fn train_and_evaluate(
    ds: &Dataset,
    spec: &ChartSpec,
    opts: &EvaluationOptions,
    cfg: &FitConfig,
) -> Result<(ModelReport, Evaluation)> {
    let wrap = |e: Error| Error::Chart {
        title: spec.title.clone(),
        source: Box::new(e),
    };
    let data = chart_data(ds, spec).map_err(wrap)?;
    let n = data.rows.len();
    let (train, test) = match opts.split {
        Some(ratio) => {
            let s = split(n, ratio, opts.seed).map_err(|e| wrap(e.into()))?;
            (data.subset(&s.train), data.subset(&s.test))
        }
        None => (data.clone(), data.clone()),
    };
    let model = train.fit(cfg).map_err(wrap)?;

    let probabilities: Vec<Vec<f64>> = (0..test.design.n_rows())
        .map(|i| model.predict_row(&test.design.row(i)))
        .collect();
    let rocs = data
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let scores: Vec<f64> = probabilities.iter().map(|p| p[j]).collect();
            let truth: Vec<bool> = test.truth.iter().map(|t| *t == j).collect();
            match roc_curve(&scores, &truth) {
                Ok(roc) => LabelRoc {
                    label: label.clone(),
                    roc: Some(roc.export(model.meta(j))),
                    unavailable: None,
                },
                Err(e) => LabelRoc {
                    label: label.clone(),
                    roc: None,
                    unavailable: Some(e.to_string()),
                },
            }
        })
        .collect();
    let cm = confusion(&data.labels, &test.truth, &probabilities)?;
    let submodels = model
        .submodels()
        .into_iter()
        .enumerate()
        .map(|(j, m)| SubmodelSummary {
            label: data.labels[j].clone(),
            equation: m.equation(),
            p_value: m.diagnostics.p_value,
            lr_chi2: m.diagnostics.lr_chi2,
            converged: m.diagnostics.converged,
            iterations: m.diagnostics.iterations,
            warnings: m.diagnostics.warnings.clone(),
        })
        .collect();
    let report = ModelReport {
        chart: spec.clone(),
        labels: data.labels.clone(),
        submodels,
        split: SplitSummary {
            ratio: opts.split,
            seed: opts.seed,
            train_rows: train.rows.len(),
            test_rows: if opts.split.is_some() { test.rows.len() } else { 0 },
            evaluated_on: if opts.split.is_some() { "test" } else { "train" }.into(),
        },
        rocs,
        accuracy: cm.accuracy(),
        confusion: cm,
        model,
    };
    let evaluation = Evaluation {
        labels: data.labels,
        row_ids: test.rows.iter().map(|&r| ds.row_ids()[r].clone()).collect(),
        truth: test.truth,
        probabilities,
    };
    Ok((report, evaluation))
}
