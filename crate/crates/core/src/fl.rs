//! Desk-scale federated learning: a linear squared-hinge SVM trained by
//! full-batch gradient descent on each scheduled client, then averaged with
//! dataset-size weights.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    /// Feature dimension of the synthetic task.
    pub dim: usize,
    /// Cluster means sit at ±separation·1/√d.
    pub separation: f64,
    /// L2 weight λ in (λ/2)·‖w‖²; the bias is not regularised.
    pub reg: f64,
    pub test_size: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self { dim: 14, separation: 1.2, reg: 1e-4, test_size: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDataset {
    pub dim: usize,
    /// Row-major `len × dim`.
    pub features: Vec<f64>,
    /// ±1 labels.
    pub labels: Vec<f64>,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Two unit-covariance Gaussians at ±separation·1/√d, alternating labels.
    pub fn synthetic<R: Rng + ?Sized>(rng: &mut R, size: usize, cfg: &LearningConfig) -> Self {
        let shift = cfg.separation / (cfg.dim as f64).sqrt();
        let mut features = Vec::with_capacity(size * cfg.dim);
        let mut labels = Vec::with_capacity(size);
        for i in 0..size {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            for _ in 0..cfg.dim {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(y * shift + noise);
            }
            labels.push(y);
        }
        Self { dim: cfg.dim, features, labels }
    }

    /// Reads numeric CSV rows: feature columns followed by a ±1 label. A
    /// non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Self, DataError> {
        let name = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => DataError::Io { path: name.clone(), source },
                other => DataError::Parse { path: name.clone(), line: 0, reason: format!("{other:?}") },
            })?;
        let mut dim = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (index, record) in reader.records().enumerate() {
            let record = record?;
            let line = index + 1;
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if index == 0 => continue,
                Err(e) => return Err(DataError::Parse { path: name, line, reason: e.to_string() }),
            };
            let bad = |reason: String| DataError::Parse { path: name.clone(), line, reason };
            let (label, row) = values.split_last().ok_or_else(|| bad("empty row".into()))?;
            if *label != 1.0 && *label != -1.0 {
                return Err(bad(format!("label must be 1 or -1, got {label}")));
            }
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => return Err(bad(format!("expected {d} features, got {}", row.len()))),
                _ => {}
            }
            features.extend_from_slice(row);
            labels.push(*label);
        }
        let dim = dim.ok_or_else(|| DataError::Parse { path: name, line: 0, reason: "no data rows".into() })?;
        Ok(Self { dim, features, labels })
    }

    /// Splits consecutive chunks of the given sizes, cycling if the data
    /// runs out.
    pub fn partition(&self, sizes: &[usize]) -> Vec<LocalDataset> {
        let mut next = 0;
        sizes
            .iter()
            .map(|&size| {
                let mut features = Vec::with_capacity(size * self.dim);
                let mut labels = Vec::with_capacity(size);
                for _ in 0..size {
                    features.extend_from_slice(self.row(next));
                    labels.push(self.labels[next]);
                    next = (next + 1) % self.len();
                }
                LocalDataset { dim: self.dim, features, labels }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Mean squared hinge loss plus (λ/2)·‖w‖².
pub fn objective(params: &ModelParams, data: &LocalDataset, reg: f64) -> f64 {
    data_loss(params, data) + 0.5 * reg * params.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Mean of max(0, 1 − y·(w·x + b))².
pub fn data_loss(params: &ModelParams, data: &LocalDataset) -> f64 {
    let total: f64 = (0..data.len())
        .map(|i| {
            let margin = 1.0 - data.labels[i] * params.score(data.row(i));
            if margin > 0.0 {
                margin * margin
            } else {
                0.0
            }
        })
        .sum();
    total / data.len() as f64
}

pub fn gradient(params: &ModelParams, data: &LocalDataset, reg: f64) -> ModelParams {
    let mut grad = ModelParams { weights: params.weights.iter().map(|w| reg * w).collect(), bias: 0.0 };
    let scale = 2.0 / data.len() as f64;
    for i in 0..data.len() {
        let x = data.row(i);
        let y = data.labels[i];
        let margin = 1.0 - y * params.score(x);
        if margin > 0.0 {
            let coeff = -scale * margin * y;
            for (g, xi) in grad.weights.iter_mut().zip(x) {
                *g += coeff * xi;
            }
            grad.bias += coeff;
        }
    }
    grad
}

/// `steps` full-batch gradient steps of size `step_size`.
pub fn local_train(params: &ModelParams, data: &LocalDataset, steps: u32, step_size: f64, reg: f64) -> ModelParams {
    let mut current = params.clone();
    for _ in 0..steps {
        let grad = gradient(&current, data, reg);
        for (w, g) in current.weights.iter_mut().zip(&grad.weights) {
            *w -= step_size * g;
        }
        current.bias -= step_size * grad.bias;
    }
    current
}

/// Dataset-size weighted mean of the scheduled models, or `previous` when
/// nobody is scheduled.
pub fn aggregate(models: &[ModelParams], schedule: &[bool], sizes: &[f64], previous: &ModelParams) -> ModelParams {
    let total: f64 = sizes.iter().zip(schedule).filter(|(_, &on)| on).map(|(d, _)| d).sum();
    if total <= 0.0 {
        return previous.clone();
    }
    let mut out = ModelParams::zeros(previous.weights.len());
    for ((model, &on), &d) in models.iter().zip(schedule).zip(sizes) {
        if !on {
            continue;
        }
        let share = d / total;
        for (o, w) in out.weights.iter_mut().zip(&model.weights) {
            *o += share * w;
        }
        out.bias += share * model.bias;
    }
    out
}

/// Data loss (without the regulariser) and accuracy; a zero score counts as +1.
pub fn evaluate(params: &ModelParams, test: &LocalDataset) -> (f64, f64) {
    let correct = (0..test.len())
        .filter(|&i| {
            let predicted = if params.score(test.row(i)) >= 0.0 { 1.0 } else { -1.0 };
            predicted == test.labels[i]
        })
        .count();
    (data_loss(params, test), correct as f64 / test.len() as f64)
}

/// Client datasets, test set and the current global model.
#[derive(Debug, Clone)]
pub struct FlEngine {
    pub clients: Vec<LocalDataset>,
    pub test: LocalDataset,
    pub global: ModelParams,
    pub reg: f64,
}

impl FlEngine {
    pub fn synthetic(sizes: &[usize], cfg: &LearningConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = sizes.iter().map(|&s| LocalDataset::synthetic(&mut rng, s, cfg)).collect();
        let test = LocalDataset::synthetic(&mut rng, cfg.test_size, cfg);
        Self { clients, test, global: ModelParams::zeros(cfg.dim), reg: cfg.reg }
    }

    pub fn from_data(clients: Vec<LocalDataset>, test: LocalDataset, reg: f64) -> Self {
        let dim = test.dim;
        Self { clients, test, global: ModelParams::zeros(dim), reg }
    }

    /// Local training on scheduled clients followed by aggregation.
    pub fn round(&mut self, schedule: &[bool], steps: u32, step_size: f64) {
        let global = &self.global;
        let reg = self.reg;
        let models: Vec<ModelParams> = self
            .clients
            .par_iter()
            .zip(schedule.par_iter())
            .map(|(data, &on)| if on { local_train(global, data, steps, step_size, reg) } else { global.clone() })
            .collect();
        let sizes: Vec<f64> = self.clients.iter().map(|c| c.len() as f64).collect();
        self.global = aggregate(&models, schedule, &sizes, &self.global);
    }

    pub fn evaluate(&self) -> (f64, f64) {
        evaluate(&self.global, &self.test)
    }
}
