//! L2-regularized logistic regression on spike-count features.
//!
//! Features are standardized internally. The fitted objective is the mean
//! logistic loss plus `lambda/2 · ‖w‖²` with the bias left unpenalized. It is
//! minimized with damped Newton steps (Cholesky solve, Armijo backtracking),
//! which never increases the objective.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Layer;

#[derive(Debug, Error, PartialEq)]
pub enum ReadoutError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("feature matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("model expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("empty evaluation set")]
    Empty,
    #[error("invalid fit options: {0}")]
    Options(String),
}

/// Column metadata: which unit of which layer a feature counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub layer: Layer,
    pub unit: usize,
}

/// Row-major samples × features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    values: Vec<f64>,
    columns: Vec<FeatureMeta>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, columns: Vec<FeatureMeta>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_rows * columns.len(), "value count must be rows × cols");
        Self {
            n_rows,
            values,
            columns,
        }
    }

    /// Builds from rows; every row must have `columns.len()` entries.
    pub fn from_rows(columns: Vec<FeatureMeta>, rows: &[Vec<f64>]) -> Self {
        let values = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), columns.len());
                r.iter().copied()
            })
            .collect();
        Self::new(rows.len(), columns, values)
    }

    /// Anonymous columns tagged as formant channels `0..n_cols`.
    pub fn unlabeled(rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let columns = (0..n)
            .map(|unit| FeatureMeta {
                layer: Layer::Formants,
                unit,
            })
            .collect();
        Self::from_rows(columns, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureMeta] {
        &self.columns
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let n = self.columns.len();
        self.values[row * n + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.columns.len();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let columns = cols.iter().map(|&c| self.columns[c]).collect();
        let values = (0..self.n_rows)
            .flat_map(|r| cols.iter().map(move |&c| self.get(r, c)))
            .collect();
        Self::new(self.n_rows, columns, values)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self::new(rows.len(), self.columns.clone(), values)
    }

    /// Column indices belonging to any of `layers`, in stored order.
    pub fn columns_of(&self, layers: &[Layer]) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&c| layers.contains(&self.columns[c].layer))
            .collect()
    }

    fn check_finite(&self) -> Result<(), ReadoutError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(ReadoutError::NonFinite {
                row: i / self.n_cols().max(1),
                col: i % self.n_cols().max(1),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Per-feature centring and scaling applied before the linear map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    /// Population std, or 1 for constant columns.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub tol: f64,
    pub standardization: Vec<Standardization>,
    pub features: Vec<FeatureMeta>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step (first entry: start point).
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Objective and gradient at `params = [w; b]` for a design `z` whose last
/// column is the all-ones bias column. The bias is not penalized.
pub fn logistic_objective(z: &DMatrix<f64>, y: &[f64], lambda: f64, params: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = z.nrows() as f64;
    let d = params.len() - 1;
    let logits = z * params;
    let mut loss = 0.0;
    let mut resid = DVector::zeros(z.nrows());
    for i in 0..z.nrows() {
        let s = logits[i];
        loss += softplus(s) - y[i] * s;
        resid[i] = sigmoid(s) - y[i];
    }
    let w = params.rows(0, d);
    let mut grad = z.tr_mul(&resid) / n;
    grad.rows_mut(0, d).axpy(lambda, &w, 1.0);
    (loss / n + 0.5 * lambda * w.norm_squared(), grad)
}

fn hessian(z: &DMatrix<f64>, lambda: f64, params: &DVector<f64>) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let logits = z * params;
    let mut scaled = z.clone();
    for i in 0..z.nrows() {
        let p = sigmoid(logits[i]);
        let s = (p * (1.0 - p) / n).sqrt();
        scaled.row_mut(i).scale_mut(s);
    }
    let mut h = scaled.tr_mul(&scaled);
    let d = params.len() - 1;
    for j in 0..d {
        h[(j, j)] += lambda;
    }
    h
}

fn standardize(x: &FeatureMatrix) -> Vec<Standardization> {
    let n = x.n_rows().max(1) as f64;
    (0..x.n_cols())
        .map(|c| {
            let mean = (0..x.n_rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
            let var = (0..x.n_rows()).map(|r| (x.get(r, c) - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            Standardization {
                mean,
                scale: if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 },
            }
        })
        .collect()
}

/// Standardized design with a trailing bias column.
fn design(x: &FeatureMatrix, std: &[Standardization]) -> DMatrix<f64> {
    let d = x.n_cols();
    DMatrix::from_fn(x.n_rows(), d + 1, |r, c| {
        if c == d {
            1.0
        } else {
            (x.get(r, c) - std[c].mean) / std[c].scale
        }
    })
}

/// Solves `h · step = -g`, adding diagonal jitter if `h` is numerically
/// singular.
fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut hj = h.clone();
        if jitter > 0.0 {
            for i in 0..hj.nrows() {
                hj[(i, i)] += jitter;
            }
        }
        if let Some(ch) = hj.cholesky() {
            return -ch.solve(g);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    -g.clone()
}

pub fn fit_logreg(x: &FeatureMatrix, y: &[bool], opts: &FitOptions) -> Result<LinearModel, ReadoutError> {
    if !(opts.lambda >= 0.0) || !(opts.tol > 0.0) {
        return Err(ReadoutError::Options(format!("lambda {} tol {}", opts.lambda, opts.tol)));
    }
    if x.n_rows() != y.len() {
        return Err(ReadoutError::LabelCount {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    if !(y.iter().any(|&v| v) && y.iter().any(|&v| !v)) {
        return Err(ReadoutError::SingleClass);
    }
    x.check_finite()?;

    let std = standardize(x);
    let z = design(x, &std);
    let yf: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let d = x.n_cols();
    let mut params = DVector::zeros(d + 1);
    let (mut f, mut g) = logistic_objective(&z, &yf, opts.lambda, &params);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.amax() < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let dir = newton_direction(hessian(&z, opts.lambda, &params), &g);
        let slope = g.dot(&dir);
        let dir = if slope < 0.0 { dir } else { -g.clone() };
        let slope = g.dot(&dir);
        let noise = 1e3 * f64::EPSILON * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let cand = &params + &dir * t;
            let (fc, gc) = logistic_objective(&z, &yf, opts.lambda, &cand);
            // Near the optimum the loss change drops below rounding noise;
            // a step that keeps the loss and shrinks the gradient is taken.
            let flat = -slope <= noise && fc <= f + noise && gc.amax() < g.amax();
            if fc <= f + 1e-4 * t * slope || flat {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, fc, gc)) => {
                params = p;
                f = fc;
                g = gc;
                trace.push(f);
            }
            // No decrease possible at machine precision.
            None => break,
        }
    }
    if !converged && g.amax() < opts.tol {
        converged = true;
    }
    if !converged {
        log::debug!("logistic fit stopped after {iterations} iterations, |g|∞ = {:e}", g.amax());
    }
    Ok(LinearModel {
        weights: params.rows(0, d).iter().copied().collect(),
        bias: params[d],
        lambda: opts.lambda,
        tol: opts.tol,
        standardization: std,
        features: x.columns().to_vec(),
        iterations,
        converged,
        loss_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<bool>,
    pub probabilities: Vec<f64>,
}

impl LinearModel {
    /// Logit of one raw (unstandardized) feature row.
    pub fn decision(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.weights)
            .zip(&self.standardization)
            .map(|((&x, &w), s)| w * (x - s.mean) / s.scale)
            .sum::<f64>()
            + self.bias
    }

    /// Writes `feature,layer,unit,weight` rows preceded by a `# {json}`
    /// header carrying lambda, tol, bias and standardization.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "lambda": self.lambda,
            "tol": self.tol,
            "bias": self.bias,
            "iterations": self.iterations,
            "converged": self.converged,
            "standardization": self.standardization,
        });
        writeln!(w, "# {header}")?;
        writeln!(w, "feature,layer,unit,weight")?;
        for (i, (meta, wt)) in self.features.iter().zip(&self.weights).enumerate() {
            writeln!(w, "{i},{},{},{wt}", meta.layer.name(), meta.unit)?;
        }
        Ok(())
    }
}

pub fn predict(model: &LinearModel, x: &FeatureMatrix) -> Result<Predictions, ReadoutError> {
    if x.n_cols() != model.weights.len() {
        return Err(ReadoutError::Dimension {
            expected: model.weights.len(),
            got: x.n_cols(),
        });
    }
    let probabilities: Vec<f64> = (0..x.n_rows()).map(|r| sigmoid(model.decision(x.row(r)))).collect();
    let labels = probabilities.iter().map(|&p| p >= 0.5).collect();
    Ok(Predictions {
        labels,
        probabilities,
    })
}

/// Fraction of correctly predicted labels.
pub fn accuracy(model: &LinearModel, x: &FeatureMatrix, y: &[bool]) -> Result<f64, ReadoutError> {
    if y.is_empty() || x.n_rows() == 0 {
        return Err(ReadoutError::Empty);
    }
    if x.n_rows() != y.len() {
        return Err(ReadoutError::LabelCount {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    let pred = predict(model, x)?;
    Ok(label_accuracy(&pred.labels, y))
}

pub(crate) fn label_accuracy(pred: &[bool], y: &[bool]) -> f64 {
    let hits = pred.iter().zip(y).filter(|(a, b)| a == b).count();
    hits as f64 / y.len() as f64
}
