use serde::{Deserialize, Serialize};

use crate::ModelError;

/// One named parameter tensor, stored flat in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        NamedTensor {
            name: name.into(),
            shape,
            values: vec![0.0; len],
        }
    }
}

/// A flat named collection of float tensors; the model parameters exchanged
/// between learners and the controller.
///
/// Two `ModelParams` are aggregation-compatible iff their tensor names,
/// order, and shapes match exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: Vec<NamedTensor>,
}

impl ModelParams {
    pub fn new(tensors: Vec<NamedTensor>) -> Self {
        ModelParams { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn compatible_with(&self, other: &ModelParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += c * other`, elementwise across all tensors.
    pub fn scaled_add(&mut self, c: f64, other: &ModelParams) -> Result<(), ModelError> {
        if !self.compatible_with(other) {
            return Err(ModelError::ShapeMismatch(
                "scaled_add over incompatible parameters".into(),
            ));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += c * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.tensors {
            for x in &mut t.values {
                *x *= c;
            }
        }
    }

    /// All scalars in tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.values.iter().copied())
            .collect()
    }

    /// Rebuild parameters with this collection's layout from a flat vector.
    pub fn unflatten(&self, values: &[f64]) -> Result<ModelParams, ModelError> {
        if values.len() != self.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} scalars, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let next = offset + t.values.len();
                let tensor = NamedTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    values: values[offset..next].to_vec(),
                };
                offset = next;
                tensor
            })
            .collect();
        Ok(ModelParams { tensors })
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
