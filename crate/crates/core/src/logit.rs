//! Binary logistic regression by ridge-penalized Newton–Raphson, and the
//! multinomial model built from k−1 one-vs-reference binary submodels whose
//! linear predictors are combined with softmax.
//!
//! Inputs are standardized with population statistics before fitting; the
//! ridge acts on standardized weights and never on the intercept.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

/// Attribute name → raw value.
pub type Profile = BTreeMap<String, f64>;

pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("labels are degenerate: only one class present")]
    DegenerateLabels,
    #[error("attribute `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("need more rows than attributes: {rows} rows, {attributes} attributes")]
    NotEnoughRows { rows: usize, attributes: usize },
    #[error("attribute `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("profile is missing attribute(s): {}", .0.join(", "))]
    IncompleteProfile(Vec<String>),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("label `{0}` has no training rows")]
    EmptyLabel(String),
    #[error("a multinomial model needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Relative change of the penalized log-likelihood that ends iteration.
    pub tol: f64,
    /// Ridge strength on standardized non-intercept weights.
    pub l2: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            l2: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(ModelError::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ModelError::InvalidConfig("tol must be > 0".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ModelError::InvalidConfig("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Logistic function clamped to `(1e-15, 1 - 1e-15)`.
pub fn sigmoid(z: f64) -> f64 {
    logistic(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Column-major design matrix with attribute names.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Design {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, n_rows: usize) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(ModelError::Shape {
                what: "design columns",
                expected: names.len(),
                found: columns.len(),
            });
        }
        for (name, c) in names.iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(ModelError::Shape {
                    what: "design column length",
                    expected: n_rows,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(name.clone()));
            }
        }
        Ok(Self {
            names,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_attrs(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

pub fn standardization_of(design: &Design) -> Result<Vec<Standardization>> {
    let n = design.n_rows() as f64;
    design
        .names
        .iter()
        .zip(&design.columns)
        .map(|(name, c)| {
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if c.iter().all(|v| *v == c[0]) || std == 0.0 || !std.is_finite() {
                return Err(ModelError::ZeroVariance(name.clone()));
            }
            Ok(Standardization { mean, std })
        })
        .collect()
}

/// Penalized Bernoulli log-likelihood over standardized columns.
/// `params[0]` is the intercept.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub columns: &'a [Vec<f64>],
    pub y: &'a [bool],
    pub l2: f64,
}

impl Objective<'_> {
    fn eta(&self, params: &[f64], i: usize) -> f64 {
        params[0]
            + self
                .columns
                .iter()
                .zip(&params[1..])
                .map(|(c, w)| c[i] * w)
                .sum::<f64>()
    }

    /// Unpenalized log-likelihood.
    pub fn log_likelihood(&self, params: &[f64]) -> f64 {
        (0..self.y.len())
            .map(|i| {
                let z = self.eta(params, i);
                if self.y[i] {
                    -softplus(-z)
                } else {
                    -softplus(z)
                }
            })
            .sum()
    }

    pub fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.l2 * params[1..].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.log_likelihood(params) - self.penalty(params)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; params.len()];
        for i in 0..self.y.len() {
            let r = f64::from(u8::from(self.y[i])) - logistic(self.eta(params, i));
            g[0] += r;
            for (gj, c) in g[1..].iter_mut().zip(self.columns) {
                *gj += r * c[i];
            }
        }
        for (gj, w) in g[1..].iter_mut().zip(&params[1..]) {
            *gj -= self.l2 * w;
        }
        g
    }

    /// Negative Hessian: `XᵀWX + λI` with the intercept unpenalized.
    fn information(&self, params: &[f64]) -> DMatrix<f64> {
        let p = params.len();
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut x = vec![1.0; p];
        for i in 0..self.y.len() {
            let mu = logistic(self.eta(params, i));
            let w = mu * (1.0 - mu);
            for (xj, c) in x[1..].iter_mut().zip(self.columns) {
                *xj = c[i];
            }
            for r in 0..p {
                let wr = w * x[r];
                for c in r..p {
                    a[(r, c)] += wr * x[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                a[(r, c)] = a[(c, r)];
            }
        }
        for j in 1..p {
            a[(j, j)] += self.l2;
        }
        a
    }
}

fn solve(a: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let b = DVector::from_column_slice(g);
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(&b).iter().copied().collect());
    }
    // Near-singular information under separation; nudge the diagonal.
    let scale = 1e-10 * (1.0 + a.diagonal().amax());
    let jittered = &a + DMatrix::identity(a.nrows(), a.ncols()) * scale;
    jittered
        .cholesky()
        .map(|ch| ch.solve(&b).iter().copied().collect())
        .or_else(|| a.lu().solve(&b).map(|v| v.iter().copied().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub lr_chi2: f64,
    pub df: usize,
    pub p_value: f64,
    /// Penalized log-likelihood after each accepted step, starting point first.
    pub objective_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogitModel {
    pub attributes: Vec<String>,
    pub standardization: Vec<Standardization>,
    /// Coefficients on standardized inputs; these drive prediction.
    pub standardized: Coefficients,
    /// The same model expressed on raw attribute units.
    pub original: Coefficients,
    pub diagnostics: Diagnostics,
    pub config: FitConfig,
}

fn check_classes(y: &[bool]) -> Result<()> {
    if y.iter().all(|v| *v) || y.iter().all(|v| !*v) {
        return Err(ModelError::DegenerateLabels);
    }
    Ok(())
}

/// Fits `P(y = 1 | x)` with standardization computed from `design`.
pub fn fit_binary(design: &Design, y: &[bool], cfg: &FitConfig) -> Result<BinaryLogitModel> {
    cfg.validate()?;
    check_shape(design, y)?;
    check_classes(y)?;
    let standardization = standardization_of(design)?;
    fit_standardized(design, &standardization, y, cfg)
}

fn check_shape(design: &Design, y: &[bool]) -> Result<()> {
    if y.len() != design.n_rows() {
        return Err(ModelError::Shape {
            what: "label count",
            expected: design.n_rows(),
            found: y.len(),
        });
    }
    if design.n_rows() <= design.n_attrs() {
        return Err(ModelError::NotEnoughRows {
            rows: design.n_rows(),
            attributes: design.n_attrs(),
        });
    }
    Ok(())
}

/// Fits with a given standardization, as multinomial submodels must share one.
pub fn fit_standardized(
    design: &Design,
    standardization: &[Standardization],
    y: &[bool],
    cfg: &FitConfig,
) -> Result<BinaryLogitModel> {
    cfg.validate()?;
    check_shape(design, y)?;
    check_classes(y)?;
    let columns: Vec<Vec<f64>> = design
        .columns
        .iter()
        .zip(standardization)
        .map(|(c, s)| c.iter().map(|v| s.apply(*v)).collect())
        .collect();
    let objective = Objective {
        columns: &columns,
        y,
        l2: cfg.l2,
    };
    let d = design.n_attrs();
    let mean_y = y.iter().filter(|v| **v).count() as f64 / y.len() as f64;
    let mut params = vec![0.0; d + 1];
    params[0] = (mean_y / (1.0 - mean_y)).ln();
    let null_log_likelihood = objective.log_likelihood(&params);

    let mut f = objective.value(&params);
    let mut trace = vec![f];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let g = objective.gradient(&params);
        let Some(step) = solve(objective.information(&params), &g) else {
            warnings.push("singular information matrix".into());
            break;
        };
        let decrement: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + t * s).collect();
            let fc = objective.value(&candidate);
            // near the optimum the gain is below the rounding of f
            if fc >= f - 8.0 * f64::EPSILON * f.abs() {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, fc)) = accepted else {
            // No ascent along the Newton direction: at the optimum up to rounding.
            converged = converged || decrement.abs() <= f64::EPSILON.sqrt() * (1.0 + f.abs());
            if !converged {
                warnings.push("step halving failed to improve the objective".into());
            }
            break;
        };
        let change = (fc - f) / f.abs().max(f64::MIN_POSITIVE);
        params = candidate;
        f = fc;
        trace.push(f);
        if converged {
            break;
        }
        if change < cfg.tol {
            // The objective is flat to ~tol while the weights are only good
            // to ~sqrt(tol); one more Newton step squares that error away.
            converged = true;
        }
    }
    if !converged && warnings.is_empty() {
        warnings.push(format!("did not converge in {} iterations", cfg.max_iter));
    }

    let log_likelihood = objective.log_likelihood(&params);
    let lr_chi2 = 2.0 * (log_likelihood - null_log_likelihood);
    let p_value = if d == 0 {
        1.0
    } else {
        ChiSquared::new(d as f64)
            .expect("positive degrees of freedom")
            .sf(lr_chi2.max(0.0))
    };
    let standardized = Coefficients {
        intercept: params[0],
        weights: params[1..].to_vec(),
    };
    let original = to_original_units(&standardized, standardization);
    Ok(BinaryLogitModel {
        attributes: design.names.clone(),
        standardization: standardization.to_vec(),
        standardized,
        original,
        diagnostics: Diagnostics {
            iterations,
            converged,
            log_likelihood,
            null_log_likelihood,
            lr_chi2,
            df: d,
            p_value,
            objective_trace: trace,
            warnings,
        },
        config: *cfg,
    })
}

fn to_original_units(c: &Coefficients, s: &[Standardization]) -> Coefficients {
    let weights: Vec<f64> = c.weights.iter().zip(s).map(|(w, s)| w / s.std).collect();
    let intercept = c.intercept
        - c.weights
            .iter()
            .zip(s)
            .map(|(w, s)| w * s.mean / s.std)
            .sum::<f64>();
    Coefficients { intercept, weights }
}

/// Raw values for `attributes`, or the list of those missing from the profile.
pub fn profile_values(attributes: &[String], profile: &Profile) -> Result<Vec<f64>> {
    let missing: Vec<String> = attributes
        .iter()
        .filter(|a| !profile.contains_key(*a))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::IncompleteProfile(missing));
    }
    Ok(attributes.iter().map(|a| profile[a]).collect())
}

impl BinaryLogitModel {
    /// Linear predictor for raw attribute values in model order.
    pub fn linear_predictor(&self, raw: &[f64]) -> f64 {
        self.standardized.intercept
            + self
                .standardized
                .weights
                .iter()
                .zip(&self.standardization)
                .zip(raw)
                .map(|((w, s), v)| w * s.apply(*v))
                .sum::<f64>()
    }

    pub fn predict_row(&self, raw: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(raw))
    }

    pub fn predict_binary(&self, profile: &Profile) -> Result<f64> {
        Ok(self.predict_row(&profile_values(&self.attributes, profile)?))
    }

    /// `logit(p) = b0 + b1*x1 + ...` in raw units.
    pub fn equation(&self) -> String {
        let mut s = format!("logit(p) = {:.6}", self.original.intercept);
        for (name, w) in self.attributes.iter().zip(&self.original.weights) {
            let sign = if *w < 0.0 { '-' } else { '+' };
            s.push_str(&format!(" {sign} {:.6}*{name}", w.abs()));
        }
        s
    }
}

/// k labels, k−1 submodels; submodel `j` is label `j` against the last label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialModel {
    pub labels: Vec<String>,
    pub attributes: Vec<String>,
    pub submodels: Vec<BinaryLogitModel>,
}

/// `assignment[i]` is the label index of design row `i`.
///
/// Each submodel only sees its own label and the reference, so nothing ties
/// two non-reference labels together. Separable classes can still be
/// confused when one lies as deep on the other's side of the reference
/// boundary as that class itself.
pub fn fit_multinomial(
    design: &Design,
    assignment: &[usize],
    labels: &[String],
    cfg: &FitConfig,
) -> Result<MultinomialModel> {
    cfg.validate()?;
    let k = labels.len();
    if k < 2 {
        return Err(ModelError::TooFewLabels(k));
    }
    if assignment.len() != design.n_rows() {
        return Err(ModelError::Shape {
            what: "label count",
            expected: design.n_rows(),
            found: assignment.len(),
        });
    }
    if let Some(&bad) = assignment.iter().find(|a| **a >= k) {
        return Err(ModelError::Shape {
            what: "label index bound",
            expected: k,
            found: bad,
        });
    }
    for (j, l) in labels.iter().enumerate() {
        if !assignment.contains(&j) {
            return Err(ModelError::EmptyLabel(l.clone()));
        }
    }
    if design.n_rows() <= design.n_attrs() {
        return Err(ModelError::NotEnoughRows {
            rows: design.n_rows(),
            attributes: design.n_attrs(),
        });
    }
    let standardization = standardization_of(design)?;
    let reference = k - 1;
    let submodels = (0..reference)
        .into_par_iter()
        .map(|j| {
            let rows: Vec<usize> = (0..assignment.len())
                .filter(|&i| assignment[i] == j || assignment[i] == reference)
                .collect();
            let y: Vec<bool> = rows.iter().map(|&i| assignment[i] == j).collect();
            fit_standardized(&design.select_rows(&rows), &standardization, &y, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultinomialModel {
        labels: labels.to_vec(),
        attributes: design.names.clone(),
        submodels,
    })
}

impl MultinomialModel {
    pub fn reference_label(&self) -> &str {
        self.labels.last().expect("k >= 2")
    }

    pub fn predict_row(&self, raw: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self.submodels.iter().map(|m| m.linear_predictor(raw)).collect();
        z.push(0.0);
        softmax(&z)
    }

    pub fn predict_multinomial(&self, profile: &Profile) -> Result<Vec<f64>> {
        Ok(self.predict_row(&profile_values(&self.attributes, profile)?))
    }

    /// One probability row per design row.
    pub fn probability_matrix(&self, design: &Design) -> Result<Vec<Vec<f64>>> {
        if design.names != self.attributes {
            return Err(ModelError::Shape {
                what: "design attributes",
                expected: self.attributes.len(),
                found: design.names.len(),
            });
        }
        Ok((0..design.n_rows()).map(|i| self.predict_row(&design.row(i))).collect())
    }

    pub fn converged(&self) -> bool {
        self.submodels.iter().all(|m| m.diagnostics.converged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design1(x: &[f64]) -> Design {
        Design::new(vec!["x".into()], vec![x.to_vec()], x.len()).unwrap()
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        for z in [-30.0, -2.5, 0.1, 7.0, 33.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-12);
        }
        assert_eq!(sigmoid(-800.0), PROB_FLOOR);
        assert_eq!(sigmoid(800.0), 1.0 - PROB_FLOOR);
    }

    #[test]
    fn softmax_examples() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]);
        for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let a = softmax(&[1.0, -2.0, 0.5]);
        let b = softmax(&[101.0, 98.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(softmax(&[1000.0, 0.0]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        let d = Design::new(vec![], vec![], 5).unwrap();
        let y = [true, false, false, true, false];
        let m = fit_binary(&d, &y, &FitConfig::default()).unwrap();
        assert!((m.standardized.intercept - (0.4f64 / 0.6).ln()).abs() < 1e-12);
        assert!(m.diagnostics.converged);
        assert_eq!(m.diagnostics.p_value, 1.0);
    }

    #[test]
    fn error_paths() {
        let cfg = FitConfig::default();
        let d = design1(&[1.0, 2.0, 3.0]);
        assert_eq!(fit_binary(&d, &[true; 3], &cfg).unwrap_err(), ModelError::DegenerateLabels);
        let c = design1(&[2.0, 2.0, 2.0]);
        assert_eq!(
            fit_binary(&c, &[true, false, true], &cfg).unwrap_err(),
            ModelError::ZeroVariance("x".into())
        );
        let small = design1(&[1.0]);
        assert!(matches!(
            fit_binary(&small, &[true], &cfg),
            Err(ModelError::NotEnoughRows { .. })
        ));
        let bad = FitConfig { tol: 0.0, ..cfg };
        assert!(matches!(
            fit_binary(&d, &[true, false, true], &bad),
            Err(ModelError::InvalidConfig(_))
        ));
        assert_eq!(
            Design::new(vec!["x".into()], vec![vec![1.0, f64::NAN]], 2).unwrap_err(),
            ModelError::NonFinite("x".into())
        );
    }

    #[test]
    fn profile_at_means_gives_intercept() {
        let x = [0.3, 1.5, -0.2, 2.2, 0.9, -1.1, 0.4];
        let y = [false, true, false, true, true, false, true];
        let m = fit_binary(&design1(&x), &y, &FitConfig::default()).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let profile: Profile = [("x".to_string(), mean)].into();
        let p = m.predict_binary(&profile).unwrap();
        assert!((p - sigmoid(m.standardized.intercept)).abs() < 1e-15);
        assert_eq!(
            m.predict_binary(&Profile::new()).unwrap_err(),
            ModelError::IncompleteProfile(vec!["x".into()])
        );
    }

    #[test]
    fn original_units_reproduce_linear_predictor() {
        let x1 = [1.0, 4.0, 2.0, 8.0, 5.0, 3.0, 7.0, 6.0];
        let x2 = [10.0, 30.0, 20.0, 25.0, 15.0, 40.0, 35.0, 5.0];
        let y = [false, false, true, true, false, true, true, false];
        let d = Design::new(vec!["a".into(), "b".into()], vec![x1.to_vec(), x2.to_vec()], 8).unwrap();
        let m = fit_binary(&d, &y, &FitConfig::default()).unwrap();
        for i in 0..8 {
            let raw = d.row(i);
            let z = m.original.intercept
                + m.original.weights.iter().zip(&raw).map(|(w, v)| w * v).sum::<f64>();
            assert!((z - m.linear_predictor(&raw)).abs() < 1e-10);
        }
        assert!(m.equation().starts_with("logit(p) = "));
        assert!(m.diagnostics.lr_chi2 >= -1e-8);
    }

    #[test]
    fn objective_is_monotone_along_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<bool> = x.iter().map(|v| rng.random::<f64>() < sigmoid(2.0 * v)).collect();
        let m = fit_binary(&design1(&x), &y, &FitConfig::default()).unwrap();
        assert!(m.diagnostics.converged);
        assert!(m.diagnostics.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn non_convergence_is_reported() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [false, false, true, true];
        let cfg = FitConfig {
            l2: 0.0,
            max_iter: 5,
            ..FitConfig::default()
        };
        let m = fit_binary(&design1(&x), &y, &cfg).unwrap();
        assert!(!m.diagnostics.converged);
        assert!(!m.diagnostics.warnings.is_empty());
    }

    #[test]
    fn two_label_multinomial_is_sigmoid() {
        let x = [0.5, 1.2, -0.7, 2.0, -1.5, 0.1, 0.9, -0.3];
        let a = [0, 0, 1, 0, 1, 1, 0, 1];
        let labels = vec!["a".to_string(), "b".to_string()];
        let mm = fit_multinomial(&design1(&x), &a, &labels, &FitConfig::default()).unwrap();
        assert_eq!(mm.submodels.len(), 1);
        for v in x {
            let p = mm.predict_row(&[v]);
            let s = mm.submodels[0].predict_row(&[v]);
            assert!((p[0] - s).abs() < 1e-9 && (p[1] - (1.0 - s)).abs() < 1e-9);
        }
    }

    #[test]
    fn multinomial_errors() {
        let d = design1(&[1.0, 2.0, 3.0, 4.0]);
        let cfg = FitConfig::default();
        assert_eq!(
            fit_multinomial(&d, &[0, 0, 0, 0], &["a".into()], &cfg).unwrap_err(),
            ModelError::TooFewLabels(1)
        );
        assert_eq!(
            fit_multinomial(&d, &[0, 0, 1, 1], &["a".into(), "b".into(), "c".into()], &cfg).unwrap_err(),
            ModelError::EmptyLabel("c".into())
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn affine_rescaling_leaves_predictions(seed in 0u64..1000, a in 0.01f64..100.0, b in -50f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
            let y: Vec<bool> = x1.iter().zip(&x2).map(|(u, v)| rng.random::<f64>() < sigmoid(u - 0.3 * v + 0.5)).collect();
            prop_assume!(y.iter().any(|v| *v) && y.iter().any(|v| !*v));
            let names = vec!["u".to_string(), "v".to_string()];
            let d = Design::new(names.clone(), vec![x1.clone(), x2.clone()], n).unwrap();
            let scaled: Vec<f64> = x2.iter().map(|v| a * v + b).collect();
            let d2 = Design::new(names, vec![x1, scaled], n).unwrap();
            let cfg = FitConfig::default();
            let m = fit_binary(&d, &y, &cfg).unwrap();
            let m2 = fit_binary(&d2, &y, &cfg).unwrap();
            for i in 0..n {
                prop_assert!((m.predict_row(&d.row(i)) - m2.predict_row(&d2.row(i))).abs() < 1e-9);
            }
        }
    }
}
