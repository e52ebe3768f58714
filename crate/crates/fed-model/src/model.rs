use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Labels};
use crate::params::{ModelParams, NamedTensor};
use crate::ModelError;

/// Supported model families. Small enough that gradients are hand-written
/// and checkable against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    LinearRegression {
        d: usize,
    },
    LogisticRegression {
        d: usize,
        classes: usize,
    },
    Mlp {
        d: usize,
        hidden: usize,
        classes: usize,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match self {
            ModelSpec::LinearRegression { d } => *d >= 1,
            ModelSpec::LogisticRegression { d, classes } => *d >= 1 && *classes >= 1,
            ModelSpec::Mlp { d, hidden, classes } => *d >= 1 && *hidden >= 1 && *classes >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidSpec(format!(
                "all model dimensions must be >= 1, got {self:?}"
            )))
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::LinearRegression { d } => *d,
            ModelSpec::LogisticRegression { d, .. } => *d,
            ModelSpec::Mlp { d, .. } => *d,
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, ModelSpec::LinearRegression { .. })
    }

    /// Deterministic initialization: weights uniform in [-0.1, 0.1], biases
    /// zero.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: Vec<usize>, name: &str| {
            let len = shape.iter().product();
            NamedTensor {
                name: name.to_string(),
                shape,
                values: (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            }
        };
        let tensors = match self {
            ModelSpec::LinearRegression { d } => vec![
                uniform(vec![*d], "weights"),
                NamedTensor::zeros("bias", vec![1]),
            ],
            ModelSpec::LogisticRegression { d, classes } => vec![
                uniform(vec![*classes, *d], "weights"),
                NamedTensor::zeros("bias", vec![*classes]),
            ],
            ModelSpec::Mlp { d, hidden, classes } => vec![
                uniform(vec![*hidden, *d], "w1"),
                NamedTensor::zeros("b1", vec![*hidden]),
                uniform(vec![*classes, *hidden], "w2"),
                NamedTensor::zeros("b2", vec![*classes]),
            ],
        };
        ModelParams::new(tensors)
    }

    fn check_shapes(&self, params: &ModelParams, data: &Dataset) -> Result<(), ModelError> {
        if !params.compatible_with(&self.init_params(0)) {
            return Err(ModelError::ShapeMismatch(format!(
                "parameters do not match {self:?}"
            )));
        }
        if data.n() > 0 && data.d() != self.input_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "dataset width {} vs model input {}",
                data.d(),
                self.input_dim()
            )));
        }
        match (self.is_classifier(), data.labels()) {
            (true, Labels::Classes(_)) | (false, Labels::Values(_)) => Ok(()),
            _ => Err(ModelError::ShapeMismatch(
                "label kind does not match the model".into(),
            )),
        }
    }

    /// Mean loss over the rows: squared error `(pred - y)^2 / 2` for
    /// regression, softmax cross-entropy for classification.
    pub fn loss(&self, params: &ModelParams, data: &Dataset) -> Result<f64, ModelError> {
        self.check_shapes(params, data)?;
        let indices: Vec<usize> = (0..data.n()).collect();
        Ok(loss_over(self, params, data, &indices))
    }
}

fn loss_over(spec: &ModelSpec, params: &ModelParams, data: &Dataset, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &i in indices {
        let x = data.row(i);
        match spec {
            ModelSpec::LinearRegression { .. } => {
                let w = &params.tensors[0].values;
                let b = params.tensors[1].values[0];
                let err = dot(w, x) + b - data.label_f64(i);
                total += 0.5 * err * err;
            }
            ModelSpec::LogisticRegression { .. } | ModelSpec::Mlp { .. } => {
                let y = match data.labels() {
                    Labels::Classes(c) => c[i],
                    Labels::Values(_) => unreachable!("shape-checked"),
                };
                let logits = forward_logits(spec, params, x).logits;
                total += cross_entropy(&logits, y);
            }
        }
    }
    total / indices.len() as f64
}

struct Forward {
    logits: Vec<f64>,
    /// MLP only: pre-activation and post-activation of the hidden layer.
    hidden: Option<(Vec<f64>, Vec<f64>)>,
}

fn forward_logits(spec: &ModelSpec, params: &ModelParams, x: &[f64]) -> Forward {
    match spec {
        ModelSpec::LogisticRegression { d, classes } => {
            let w = &params.tensors[0].values;
            let b = &params.tensors[1].values;
            let logits = (0..*classes)
                .map(|c| dot(&w[c * d..(c + 1) * d], x) + b[c])
                .collect();
            Forward {
                logits,
                hidden: None,
            }
        }
        ModelSpec::Mlp { d, hidden, classes } => {
            let w1 = &params.tensors[0].values;
            let b1 = &params.tensors[1].values;
            let w2 = &params.tensors[2].values;
            let b2 = &params.tensors[3].values;
            let pre: Vec<f64> = (0..*hidden)
                .map(|h| dot(&w1[h * d..(h + 1) * d], x) + b1[h])
                .collect();
            let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let logits = (0..*classes)
                .map(|c| dot(&w2[c * hidden..(c + 1) * hidden], &act) + b2[c])
                .collect();
            Forward {
                logits,
                hidden: Some((pre, act)),
            }
        }
        ModelSpec::LinearRegression { .. } => unreachable!("regression has no logits"),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    log_sum_exp(logits) - logits[y]
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

/// Exact mean gradient of the loss over the batch, in the parameter layout
/// of the spec.
pub fn gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Dataset,
) -> Result<ModelParams, ModelError> {
    spec.check_shapes(params, batch)?;
    let indices: Vec<usize> = (0..batch.n()).collect();
    Ok(gradient_over(spec, params, batch, &indices))
}

pub(crate) fn gradient_over(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
) -> ModelParams {
    let mut grad = params.zeros_like();
    if indices.is_empty() {
        return grad;
    }
    let scale = 1.0 / indices.len() as f64;
    for &i in indices {
        let x = data.row(i);
        match spec {
            ModelSpec::LinearRegression { d } => {
                let w = &params.tensors[0].values;
                let b = params.tensors[1].values[0];
                let err = (dot(w, x) + b - data.label_f64(i)) * scale;
                let gw = &mut grad.tensors[0].values;
                for k in 0..*d {
                    gw[k] += err * x[k];
                }
                grad.tensors[1].values[0] += err;
            }
            ModelSpec::LogisticRegression { d, classes } => {
                let y = class_of(data, i);
                let forward = forward_logits(spec, params, x);
                let mut delta = softmax(&forward.logits);
                delta[y] -= 1.0;
                for c in 0..*classes {
                    let dc = delta[c] * scale;
                    let gw = &mut grad.tensors[0].values[c * d..(c + 1) * d];
                    for k in 0..*d {
                        gw[k] += dc * x[k];
                    }
                    grad.tensors[1].values[c] += dc;
                }
            }
            ModelSpec::Mlp { d, hidden, classes } => {
                let y = class_of(data, i);
                let forward = forward_logits(spec, params, x);
                let (pre, act) = forward.hidden.as_ref().unwrap();
                let w2 = &params.tensors[2].values;
                let mut delta = softmax(&forward.logits);
                delta[y] -= 1.0;
                // output layer
                for c in 0..*classes {
                    let dc = delta[c] * scale;
                    let gw2 = &mut grad.tensors[2].values[c * hidden..(c + 1) * hidden];
                    for h in 0..*hidden {
                        gw2[h] += dc * act[h];
                    }
                    grad.tensors[3].values[c] += dc;
                }
                // backprop through relu
                for h in 0..*hidden {
                    if pre[h] <= 0.0 {
                        continue;
                    }
                    let mut dh = 0.0;
                    for c in 0..*classes {
                        dh += delta[c] * w2[c * hidden + h];
                    }
                    dh *= scale;
                    let gw1 = &mut grad.tensors[0].values[h * d..(h + 1) * d];
                    for k in 0..*d {
                        gw1[k] += dh * x[k];
                    }
                    grad.tensors[1].values[h] += dh;
                }
            }
        }
    }
    grad
}

fn class_of(data: &Dataset, i: usize) -> usize {
    match data.labels() {
        Labels::Classes(c) => c[i],
        Labels::Values(_) => unreachable!("shape-checked"),
    }
}

/// Per-evaluation metrics; serializes to one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub loss: Option<f64>,
    pub metric_name: String,
    pub metric_value: Option<f64>,
    pub n: usize,
}

/// Deterministic evaluation: mean loss plus accuracy (classification) or
/// mean absolute error (regression). An empty dataset reports absent metrics
/// with `n = 0`.
pub fn evaluate(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> MetricsReport {
    let metric_name = if spec.is_classifier() {
        "accuracy"
    } else {
        "mae"
    };
    if data.n() == 0 {
        return MetricsReport {
            loss: None,
            metric_name: metric_name.into(),
            metric_value: None,
            n: 0,
        };
    }
    let indices: Vec<usize> = (0..data.n()).collect();
    let loss = loss_over(spec, params, data, &indices);
    let metric = match spec {
        ModelSpec::LinearRegression { .. } => {
            let w = &params.tensors[0].values;
            let b = params.tensors[1].values[0];
            let total: f64 = indices
                .iter()
                .map(|&i| (dot(w, data.row(i)) + b - data.label_f64(i)).abs())
                .sum();
            total / data.n() as f64
        }
        _ => {
            let correct = indices
                .iter()
                .filter(|&&i| {
                    let logits = forward_logits(spec, params, data.row(i)).logits;
                    argmax(&logits) == class_of(data, i)
                })
                .count();
            correct as f64 / data.n() as f64
        }
    };
    MetricsReport {
        loss: Some(loss),
        metric_name: metric_name.into(),
        metric_value: Some(metric),
        n: data.n(),
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
